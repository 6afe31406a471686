#pragma once

#include <string>
#include <vector>

#include "ugnn/graph.hpp"
#include "ugnn/io.hpp"
#include "ugnn/matrix.hpp"

namespace ugnn {

/// A directory dataset: edges.tsv, features.csv, labels.csv and an optional
/// splits.csv. Node count comes from the feature matrix.
struct Dataset {
  HeteroGraph g;
  Matrix X;
  LabelSet labels;
  std::vector<Split> splits;  // empty when splits.csv is absent
  bool has_splits = false;
};

Dataset load_planetoid_like(const std::string& dir);

/// Command line entry point; returns the process exit status. Every
/// subcommand prints one summary line on stdout; diagnostics go to stderr.
int run(int argc, char** argv);

}  // namespace ugnn
