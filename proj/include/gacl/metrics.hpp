#pragma once

#include <cstdint>
#include <span>
#include <string>

namespace gacl {

double mae(std::span<const double> pred, std::span<const double> actual);
/// mae * n / sum(actual); requires a positive actual sum.
double nmae(std::span<const double> pred, std::span<const double> actual);
double rmse(std::span<const double> pred, std::span<const double> actual);

/// One evaluation's results. The canonical JSON (and the CSV row) carry only
/// the reproducible fields; wall time varies run to run and lives in run
/// manifests instead, keeping reports byte-comparable across identical runs.
struct MetricsReport {
  std::string dataset_name;
  double density = 0.0;
  std::string ablation;
  double mae = 0.0;
  double nmae = 0.0;
  double rmse = 0.0;
  int64_t n_eval = 0;
  double wall_time = 0.0;  // seconds; excluded from the canonical forms
  uint64_t config_hash = 0;

  std::string to_json() const;  // canonical: sorted keys, schema field, one line
  std::string to_csv_row() const;
  static std::string csv_header();
};

}  // namespace gacl
