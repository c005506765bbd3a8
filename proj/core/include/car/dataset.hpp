#pragma once
#include <string>

#include "car/graph.hpp"

namespace car {

// Dataset directory layout:
//   edges.tsv     one "source target" pair per line; '#' lines are comments
//   features.tsv  "node_id f0 f1 ..." covering ids 0..N-1 exactly once
//   labels.tsv    "node_id label" for every node
//   splits.tsv    "node_id train|val|test" for any subset of nodes
//   meta.json     {"directed": bool, "num_classes": int}
// Undirected datasets are doubled into two directed edges at load.
Graph load_dataset(const std::string& dir);

// Writes the directed edge list as stored (meta directed=true), so a
// saved dataset reloads to the identical graph.
void save_dataset(const Graph& g, const std::string& dir);

// Converts raw citation files (content: "id w0..wF label" rows; cites:
// "cited citing" rows) into a dataset directory. Splits follow the usual
// convention derived from content order: first 20 per class train, next
// 500 validation, last 1000 test.
void convert_planetoid(const std::string& content_path, const std::string& cites_path,
                       const std::string& out_dir);

}  // namespace car
