#pragma once

#include <atomic>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace gacl {

struct QoSRecord {
  int64_t user = 0;
  int64_t service = 0;
  int64_t slice = 0;
  double value = 0.0;
};

inline bool triple_less(const QoSRecord& a, const QoSRecord& b) {
  if (a.user != b.user) return a.user < b.user;
  if (a.service != b.service) return a.service < b.service;
  return a.slice < b.slice;
}

/// Immutable record collection in canonical (user, service, slice) order.
struct TemporalQoSDataset {
  int64_t n_users = 0;
  int64_t n_services = 0;
  int64_t n_slices = 0;
  double value_min = 0.0;
  double value_max = 0.0;
  std::vector<QoSRecord> records;

  double observed_density() const;
  std::string serialize() const;  // canonical text form; parse(serialize(x)) == x
  uint64_t content_hash() const;
};

struct ParseOptions {
  bool has_header = false;
  // 0 = infer as max index + 1; positive values declare bounds records must respect
  int64_t n_users = 0;
  int64_t n_services = 0;
  int64_t n_slices = 0;
};

TemporalQoSDataset parse_records(std::istream& in, const ParseOptions& opts = {});
TemporalQoSDataset load_dataset(const std::string& path, const ParseOptions& opts = {});
void save_dataset(const TemporalQoSDataset& ds, const std::string& path);

/// round(density * total); the split contract allows +-1 from exact.
int64_t split_train_count(int64_t total, double density);

/// Read access to a subset of a dataset's records that counts every record
/// it hands out. The counters are the instrumentation behind the
/// no-test-data-during-training audit.
class RecordView {
 public:
  RecordView(const TemporalQoSDataset* ds, std::vector<int64_t> indices)
      : ds_(ds), indices_(std::move(indices)) {}
  RecordView(const RecordView&) = delete;
  RecordView& operator=(const RecordView&) = delete;

  size_t size() const { return indices_.size(); }
  bool empty() const { return indices_.empty(); }
  const QoSRecord& operator[](size_t i) const;

  uint64_t access_count() const { return accesses_.load(); }
  void reset_access_count() const { accesses_.store(0); }

 private:
  const TemporalQoSDataset* ds_;
  std::vector<int64_t> indices_;
  mutable std::atomic<uint64_t> accesses_{0};
};

/// Seeded uniform split of a dataset into train/test record views.
class SplitDataset {
 public:
  SplitDataset(TemporalQoSDataset ds, double density, uint64_t seed);
  SplitDataset(const SplitDataset&) = delete;
  SplitDataset& operator=(const SplitDataset&) = delete;

  const TemporalQoSDataset& dataset() const { return ds_; }
  const RecordView& train() const { return *train_; }
  const RecordView& test() const { return *test_; }
  double density() const { return density_; }
  uint64_t seed() const { return seed_; }

  /// Train-split records at one time slice (test entries are invisible so
  /// nothing downstream of graph construction can see them).
  std::vector<QoSRecord> slice_records(int64_t t) const;

  /// Canonical JSON: seed, density, counts, parent content hash.
  std::string manifest_json() const;

 private:
  TemporalQoSDataset ds_;
  double density_;
  uint64_t seed_;
  std::unique_ptr<RecordView> train_;
  std::unique_ptr<RecordView> test_;
};

}  // namespace gacl
