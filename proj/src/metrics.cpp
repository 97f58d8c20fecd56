#include "gacl/metrics.hpp"

#include <cmath>
#include <cstdio>

#include "gacl/common.hpp"
#include "json.hpp"

namespace gacl {

namespace {

void check_lengths(std::span<const double> pred, std::span<const double> actual,
                   const char* what) {
  if (pred.empty()) throw ValidationError(std::string(what) + " over an empty evaluation set");
  if (pred.size() != actual.size()) {
    throw ValidationError(std::string(what) + ": " + std::to_string(pred.size()) +
                          " predictions vs " + std::to_string(actual.size()) + " actuals");
  }
}

}  // namespace

double mae(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual, "mae");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - actual[i]);
  return s / static_cast<double>(pred.size());
}

double nmae(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual, "nmae");
  double total = 0.0;
  for (double a : actual) total += a;
  if (total <= 0.0) throw ValidationError("nmae undefined: actual values sum to " +
                                          std::to_string(total));
  return mae(pred, actual) * static_cast<double>(actual.size()) / total;
}

double rmse(std::span<const double> pred, std::span<const double> actual) {
  check_lengths(pred, actual, "rmse");
  double s = 0.0;
  for (size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - actual[i];
    s += d * d;
  }
  return std::sqrt(s / static_cast<double>(pred.size()));
}

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["schema"] = 1;
  j["dataset"] = dataset_name;
  j["density"] = density;
  j["ablation"] = ablation;
  j["mae"] = mae;
  j["nmae"] = nmae;
  j["rmse"] = rmse;
  j["n_eval"] = n_eval;
  j["config_hash"] = hex64(config_hash);
  return j.dump();
}

std::string MetricsReport::csv_header() { return "dataset,density,ablation,mae,nmae,rmse,n_eval"; }

std::string MetricsReport::to_csv_row() const {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%.17g,%s,%.17g,%.17g,%.17g,%lld", dataset_name.c_str(),
                density, ablation.c_str(), mae, nmae, rmse, static_cast<long long>(n_eval));
  return buf;
}

}  // namespace gacl
