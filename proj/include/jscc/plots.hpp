#pragma once

#include <string>
#include <vector>

#include "jscc/evaluation.hpp"

namespace jscc {

// All writers are deterministic functions of the records: fixed column
// order, fixed number formatting, no timestamps.

// One record per row.
void write_records_tsv(const std::vector<EvalRecord>& records, const std::string& path);

// Pivot table: rows are gamma values, columns are series
// (protocol / lambda / source-relay SNR); metric is "psnr" or "ssim".
void write_metric_table(const std::vector<EvalRecord>& records, const std::string& metric,
                        const std::string& path);

// Line chart of metric vs gamma, one polyline per series.
void write_metric_svg(const std::vector<EvalRecord>& records, const std::string& metric,
                      const std::string& path);

}  // namespace jscc
