#pragma once

#include <string>
#include <vector>

#include "livekt/evaluation.hpp"

namespace livekt {

// JSON array of entries; `auc` is null when unavailable.
std::string report_to_json(const std::vector<EvalEntry>& entries);

// Header: dataset,model,T,auc,accuracy,logloss,n_test_rows,fit_seconds,predict_seconds,epochs
// Unavailable AUC renders as the literal `na`.
std::string report_to_csv(const std::vector<EvalEntry>& entries);

// Two stacked line charts (AUC vs T on top, fit+predict seconds vs T below),
// one polyline per model. Self-contained SVG, no plotting dependency.
std::string report_to_svg(const std::vector<EvalEntry>& entries);

// Writes via temp file + rename so readers never observe partial output.
void write_file_atomic(const std::string& path, const std::string& content);

}  // namespace livekt
