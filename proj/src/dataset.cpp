#include "gacl/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>

#include "gacl/common.hpp"
#include "json.hpp"

namespace gacl {

double TemporalQoSDataset::observed_density() const {
  const double cells = static_cast<double>(n_users) * static_cast<double>(n_services) *
                       static_cast<double>(n_slices);
  return cells > 0 ? static_cast<double>(records.size()) / cells : 0.0;
}

std::string TemporalQoSDataset::serialize() const {
  std::string out;
  out.reserve(records.size() * 24);
  char buf[96];
  for (const QoSRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%lld %lld %lld %.17g\n", static_cast<long long>(r.user),
                  static_cast<long long>(r.service), static_cast<long long>(r.slice), r.value);
    out += buf;
  }
  return out;
}

uint64_t TemporalQoSDataset::content_hash() const { return fnv1a64(serialize()); }

namespace {

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

[[noreturn]] void parse_fail(size_t line_no, const std::string& what) {
  throw ValidationError("line " + std::to_string(line_no) + ": " + what);
}

[[noreturn]] void syntax_fail(size_t line_no, const std::string& what) {
  throw ParseError("line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

TemporalQoSDataset parse_records(std::istream& in, const ParseOptions& opts) {
  TemporalQoSDataset ds;
  std::string line;
  size_t line_no = 0;
  bool header_pending = opts.has_header;
  int64_t max_u = -1, max_s = -1, max_t = -1;

  while (std::getline(in, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    if (header_pending) {
      header_pending = false;
      continue;
    }
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    QoSRecord r;
    if (!(ss >> r.user >> r.service >> r.slice >> r.value)) {
      syntax_fail(line_no, "expected 4 numeric columns (user service slice value)");
    }
    std::string extra;
    if (ss >> extra) syntax_fail(line_no, "trailing content after 4 columns: '" + extra + "'");
    if (r.user < 0 || r.service < 0 || r.slice < 0) parse_fail(line_no, "negative index");
    if (!std::isfinite(r.value) || r.value < 0) {
      parse_fail(line_no, "value must be finite and non-negative");
    }
    if (opts.n_users > 0 && r.user >= opts.n_users) {
      parse_fail(line_no, "user index " + std::to_string(r.user) + " exceeds declared n_users " +
                              std::to_string(opts.n_users));
    }
    if (opts.n_services > 0 && r.service >= opts.n_services) {
      parse_fail(line_no, "service index " + std::to_string(r.service) +
                              " exceeds declared n_services " + std::to_string(opts.n_services));
    }
    if (opts.n_slices > 0 && r.slice >= opts.n_slices) {
      parse_fail(line_no, "slice index " + std::to_string(r.slice) + " exceeds declared n_slices " +
                              std::to_string(opts.n_slices));
    }
    max_u = std::max(max_u, r.user);
    max_s = std::max(max_s, r.service);
    max_t = std::max(max_t, r.slice);
    ds.records.push_back(r);
  }
  if (ds.records.empty()) throw ValidationError("no records");

  ds.n_users = opts.n_users > 0 ? opts.n_users : max_u + 1;
  ds.n_services = opts.n_services > 0 ? opts.n_services : max_s + 1;
  ds.n_slices = opts.n_slices > 0 ? opts.n_slices : max_t + 1;

  std::sort(ds.records.begin(), ds.records.end(), triple_less);
  for (size_t i = 1; i < ds.records.size(); ++i) {
    const QoSRecord& a = ds.records[i - 1];
    const QoSRecord& b = ds.records[i];
    if (a.user == b.user && a.service == b.service && a.slice == b.slice) {
      throw ValidationError("duplicate record for (user=" + std::to_string(a.user) +
                            ", service=" + std::to_string(a.service) +
                            ", slice=" + std::to_string(a.slice) + ")");
    }
  }

  ds.value_min = ds.records.front().value;
  ds.value_max = ds.value_min;
  for (const QoSRecord& r : ds.records) {
    ds.value_min = std::min(ds.value_min, r.value);
    ds.value_max = std::max(ds.value_max, r.value);
  }
  return ds;
}

TemporalQoSDataset load_dataset(const std::string& path, const ParseOptions& opts) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open dataset: " + path);
  try {
    return parse_records(f, opts);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

void save_dataset(const TemporalQoSDataset& ds, const std::string& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot open dataset for writing: " + path);
  f << ds.serialize();
  if (!f) throw IoError("failed writing dataset: " + path);
}

int64_t split_train_count(int64_t total, double density) {
  return static_cast<int64_t>(std::llround(density * static_cast<double>(total)));
}

const QoSRecord& RecordView::operator[](size_t i) const {
  accesses_.fetch_add(1, std::memory_order_relaxed);
  return ds_->records[static_cast<size_t>(indices_[i])];
}

SplitDataset::SplitDataset(TemporalQoSDataset ds, double density, uint64_t seed)
    : ds_(std::move(ds)), density_(density), seed_(seed) {
  if (density <= 0 || density >= 1) throw ValidationError("density must lie in (0, 1)");
  const int64_t n = static_cast<int64_t>(ds_.records.size());
  const int64_t k = split_train_count(n, density);
  if (k <= 0) throw ValidationError("split would leave the train set empty");

  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  rng.shuffle(idx);

  std::vector<int64_t> train_idx(idx.begin(), idx.begin() + k);
  std::vector<int64_t> test_idx(idx.begin() + k, idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  train_ = std::make_unique<RecordView>(&ds_, std::move(train_idx));
  test_ = std::make_unique<RecordView>(&ds_, std::move(test_idx));
}

std::vector<QoSRecord> SplitDataset::slice_records(int64_t t) const {
  if (t < 0 || t >= ds_.n_slices) {
    throw ValidationError("slice " + std::to_string(t) + " out of range [0," +
                          std::to_string(ds_.n_slices) + ")");
  }
  std::vector<QoSRecord> out;
  const RecordView& tr = train();
  for (size_t i = 0; i < tr.size(); ++i) {
    const QoSRecord& r = tr[i];
    if (r.slice == t) out.push_back(r);
  }
  return out;
}

std::string SplitDataset::manifest_json() const {
  nlohmann::json j;
  j["content_hash"] = hex64(ds_.content_hash());
  j["density"] = density_;
  j["seed"] = seed_;
  j["train_count"] = train().size();
  j["test_count"] = test().size();
  return j.dump();
}

}  // namespace gacl
