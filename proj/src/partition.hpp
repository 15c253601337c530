#pragma once

#include <cstdint>
#include <vector>

#include "dataset.hpp"

namespace fedlab {

// Every client must end up with at least this many samples; partitioners that
// cannot satisfy it reject and redraw, then give up with a config error.
inline constexpr int kMinClientSize = 10;

enum class PartitionKind { ClassesPerClient, Dirichlet, Iid };

struct FederatedPartition {
  std::vector<std::vector<int32_t>> client_indices;  // disjoint row indices, ascending per client
  PartitionKind kind = PartitionKind::Iid;
  uint64_t seed = 0;
  int classes_per_client = 0;  // set for ClassesPerClient
  double beta = 0.0;           // set for Dirichlet

  int clients() const { return int(client_indices.size()); }
};

// #C=k label skew: each client owns exactly k distinct classes; the whole
// assignment is redrawn until every class is owned and every client clears
// kMinClientSize (at most 1000 attempts). Each class's samples are split into
// contiguous shards of a seeded shuffle, equal sizes with the remainder going
// to the owner with the lowest client index.
FederatedPartition partition_classes(const Dataset& ds, int clients, int classes_per_client,
                                     uint64_t seed);

// Dirichlet label skew: per class, proportions ~ Dir(beta * 1_N) allocate that
// class's samples by cumulative shares. Whole draws violating kMinClientSize
// are rejected with a fresh sub-seed; 100 consecutive rejections is a config
// error.
FederatedPartition partition_dirichlet(const Dataset& ds, int clients, double beta, uint64_t seed);

// Seeded shuffle, near-equal contiguous split.
FederatedPartition partition_iid(const Dataset& ds, int clients, uint64_t seed);

}  // namespace fedlab
