#pragma once

#include <string>
#include <vector>

#include "ugnn/graph.hpp"
#include "ugnn/matrix.hpp"

namespace ugnn {

/// 17 significant digits, round-trips real64 exactly.
std::string format_real(double v);

/// One edge per line, `src<TAB>rel<TAB>dst`, 0-based decimal, `#` comments.
std::vector<Triplet> load_triplet_file(const std::string& path);

/// CSV of real64, row v = node v.
Matrix load_csv_matrix(const std::string& path);

/// CSV lines `node_id,class_id`; absent nodes are unobserved; duplicates
/// rejected.
LabelSet load_labels(const std::string& path, std::size_t n);

enum class Split { Train, Val, Test, None };

/// CSV lines `node_id,train|val|test`.
std::vector<Split> load_splits(const std::string& path, std::size_t n);

/// Write-then-rename so consumers never observe a partial file.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace ugnn
