#include "partition.hpp"

#include <algorithm>

#include "rng.hpp"

namespace fedlab {

namespace {

std::vector<std::vector<int32_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<int32_t>> by_class(size_t(ds.num_classes));
  for (int i = 0; i < ds.n(); ++i) by_class[size_t(ds.labels[size_t(i)])].push_back(i);
  return by_class;
}

void check_common(const Dataset& ds, int clients) {
  if (clients < 1) fail(ErrorCode::Config, "partition: clients must be >= 1");
  if (ds.n() < clients * kMinClientSize) {
    fail(ErrorCode::Config, "partition: dataset has " + std::to_string(ds.n()) +
                                " samples, need at least " +
                                std::to_string(clients * kMinClientSize) + " for " +
                                std::to_string(clients) + " clients");
  }
}

void sort_clients(FederatedPartition& part) {
  for (auto& idx : part.client_indices) std::sort(idx.begin(), idx.end());
}

}  // namespace

FederatedPartition partition_classes(const Dataset& ds, int clients, int classes_per_client,
                                     uint64_t seed) {
  check_common(ds, clients);
  int m = ds.num_classes;
  int k = classes_per_client;
  if (k < 1 || k > m) fail(ErrorCode::Config, "partition: classes_per_client out of range [1, m]");
  if (int64_t(clients) * k < m) {
    fail(ErrorCode::Config, "partition: clients*classes_per_client < classes; some class would be unowned");
  }

  std::vector<std::vector<int32_t>> by_class = indices_by_class(ds);
  for (int c = 0; c < m; ++c) {
    if (by_class[size_t(c)].empty()) {
      fail(ErrorCode::Config, "partition: class " + std::to_string(c) + " has no samples");
    }
  }

  // Redraw the whole class assignment until it is feasible: every class owned,
  // every owner gets at least one sample of each assigned class, and every
  // client clears kMinClientSize.
  std::vector<std::vector<int>> assigned(static_cast<size_t>(clients));
  std::vector<std::vector<int>> owners;
  bool ok = false;
  for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
    Rng rng(mix_seed(seed, stream::kPartition, uint64_t(attempt)));
    owners.assign(size_t(m), {});
    std::vector<int> classes(static_cast<size_t>(m));
    for (int c = 0; c < m; ++c) classes[size_t(c)] = c;
    for (int i = 0; i < clients; ++i) {
      shuffle_vec(classes, rng);
      assigned[size_t(i)].assign(classes.begin(), classes.begin() + k);
      std::sort(assigned[size_t(i)].begin(), assigned[size_t(i)].end());
      for (int c : assigned[size_t(i)]) owners[size_t(c)].push_back(i);
    }

    ok = true;
    std::vector<int64_t> totals(size_t(clients), 0);
    for (int c = 0; c < m && ok; ++c) {
      size_t no = owners[size_t(c)].size();
      if (no == 0) {
        ok = false;
        break;
      }
      int64_t cnt = int64_t(by_class[size_t(c)].size());
      int64_t base = cnt / int64_t(no);
      if (base < 1) {
        ok = false;  // some owner would get zero samples of an assigned class
        break;
      }
      int64_t rem = cnt % int64_t(no);
      for (size_t j = 0; j < no; ++j) {
        totals[size_t(owners[size_t(c)][j])] += base + (j == 0 ? rem : 0);
      }
    }
    if (ok) {
      for (int64_t t : totals) {
        if (t < kMinClientSize) {
          ok = false;
          break;
        }
      }
    }
  }
  if (!ok) {
    fail(ErrorCode::Config,
         "partition: no feasible classes-per-client assignment after 1000 attempts");
  }

  FederatedPartition part;
  part.kind = PartitionKind::ClassesPerClient;
  part.seed = seed;
  part.classes_per_client = k;
  part.client_indices.assign(size_t(clients), {});
  for (int c = 0; c < m; ++c) {
    std::vector<int32_t> idx = by_class[size_t(c)];
    Rng rng(mix_seed(seed, stream::kShards, uint64_t(c)));
    shuffle_vec(idx, rng);
    const std::vector<int>& own = owners[size_t(c)];  // ascending client ids
    int64_t cnt = int64_t(idx.size());
    int64_t base = cnt / int64_t(own.size());
    int64_t rem = cnt % int64_t(own.size());
    int64_t pos = 0;
    for (size_t j = 0; j < own.size(); ++j) {
      int64_t take = base + (j == 0 ? rem : 0);
      auto& dst = part.client_indices[size_t(own[j])];
      dst.insert(dst.end(), idx.begin() + pos, idx.begin() + pos + take);
      pos += take;
    }
  }
  sort_clients(part);
  return part;
}

FederatedPartition partition_dirichlet(const Dataset& ds, int clients, double beta, uint64_t seed) {
  check_common(ds, clients);
  if (!(beta > 0.0)) fail(ErrorCode::Config, "partition: beta must be > 0");

  std::vector<std::vector<int32_t>> by_class = indices_by_class(ds);
  // one shuffle per class, independent of the rejection loop
  for (int c = 0; c < ds.num_classes; ++c) {
    Rng rng(mix_seed(seed, stream::kShards, uint64_t(c)));
    shuffle_vec(by_class[size_t(c)], rng);
  }

  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng(mix_seed(seed, stream::kPartition, uint64_t(attempt)));
    std::vector<std::vector<int32_t>> out(static_cast<size_t>(clients));
    for (int c = 0; c < ds.num_classes; ++c) {
      std::vector<double> props(static_cast<size_t>(clients));
      double total = 0.0;
      for (double& p : props) {
        p = rng.gamma(beta);
        total += p;
      }
      if (!(total > 0.0)) {
        break;  // astronomically unlikely underflow; count as a rejection
      }
      const std::vector<int32_t>& idx = by_class[size_t(c)];
      int64_t cnt = int64_t(idx.size());
      double acc = 0.0;
      int64_t prev = 0;
      for (int i = 0; i < clients; ++i) {
        acc += props[size_t(i)] / total;
        int64_t bound = (i == clients - 1) ? cnt : int64_t(acc * double(cnt));
        if (bound < prev) bound = prev;
        if (bound > cnt) bound = cnt;
        out[size_t(i)].insert(out[size_t(i)].end(), idx.begin() + prev, idx.begin() + bound);
        prev = bound;
      }
    }

    bool ok = true;
    for (const auto& v : out) {
      if (int64_t(v.size()) < kMinClientSize) {
        ok = false;
        break;
      }
    }
    if (ok) {
      FederatedPartition part;
      part.kind = PartitionKind::Dirichlet;
      part.seed = seed;
      part.beta = beta;
      part.client_indices = std::move(out);
      sort_clients(part);
      return part;
    }
  }
  fail(ErrorCode::Config,
       "partition: dirichlet draw rejected 100 times (some client below " +
           std::to_string(kMinClientSize) + " samples); increase data per client or beta");
}

FederatedPartition partition_iid(const Dataset& ds, int clients, uint64_t seed) {
  check_common(ds, clients);
  std::vector<int32_t> idx = iota_indices(ds.n());
  Rng rng(mix_seed(seed, stream::kPartition));
  shuffle_vec(idx, rng);

  FederatedPartition part;
  part.kind = PartitionKind::Iid;
  part.seed = seed;
  part.client_indices.assign(size_t(clients), {});
  int64_t base = ds.n() / clients;
  int64_t rem = ds.n() % clients;
  int64_t pos = 0;
  for (int i = 0; i < clients; ++i) {
    int64_t take = base + (i < rem ? 1 : 0);
    part.client_indices[size_t(i)].assign(idx.begin() + pos, idx.begin() + pos + take);
    pos += take;
  }
  sort_clients(part);
  return part;
}

}  // namespace fedlab
