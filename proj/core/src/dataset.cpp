#include "car/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace car {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (c == '#') return true;
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

std::ifstream open_or_throw(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw DataError("cannot open '" + p.string() + "'");
  return in;
}

[[noreturn]] void bad_line(const fs::path& p, std::size_t line_no, const std::string& why) {
  throw DataError(p.filename().string() + " line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

Graph load_dataset(const std::string& dir) {
  const fs::path root(dir);

  // meta.json establishes directedness and the class count.
  std::ifstream meta_in = open_or_throw(root / "meta.json");
  json meta = json::parse(meta_in, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.contains("directed") || !meta.contains("num_classes"))
    throw DataError("meta.json: need object with 'directed' and 'num_classes'");
  const bool directed = meta.at("directed").get<bool>();
  const std::size_t num_classes = meta.at("num_classes").get<std::size_t>();
  if (num_classes < 2) throw DataError("meta.json: num_classes must be at least 2");

  // features.tsv defines the node count.
  fs::path fpath = root / "features.tsv";
  std::ifstream fin = open_or_throw(fpath);
  std::vector<std::pair<std::size_t, std::vector<double>>> rows;
  std::string line;
  std::size_t line_no = 0, feature_dim = 0;
  while (std::getline(fin, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::size_t id;
    if (!(ss >> id)) bad_line(fpath, line_no, "expected a node id");
    std::vector<double> feats;
    double v;
    while (ss >> v) feats.push_back(v);
    if (feats.empty()) bad_line(fpath, line_no, "node " + std::to_string(id) + " has no features");
    if (feature_dim == 0)
      feature_dim = feats.size();
    else if (feats.size() != feature_dim)
      bad_line(fpath, line_no,
               "expected " + std::to_string(feature_dim) + " features, got " +
                   std::to_string(feats.size()));
    rows.emplace_back(id, std::move(feats));
  }
  if (rows.empty()) throw DataError("features.tsv: no rows");
  const std::size_t n = rows.size();
  std::vector<std::uint8_t> seen(n, 0);
  for (auto& [id, _] : rows) {
    if (id >= n) throw DataError("features.tsv: node id " + std::to_string(id) +
                                 " outside 0.." + std::to_string(n - 1));
    if (seen[id]) throw DataError("features.tsv: duplicate node id " + std::to_string(id));
    seen[id] = 1;
  }

  // edges.tsv
  fs::path epath = root / "edges.tsv";
  std::ifstream ein = open_or_throw(epath);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  line_no = 0;
  while (std::getline(ein, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    long long s, t;
    if (!(ss >> s >> t)) bad_line(epath, line_no, "expected two node ids");
    if (s < 0 || t < 0 || s >= static_cast<long long>(n) || t >= static_cast<long long>(n))
      bad_line(epath, line_no, "node id " + std::to_string(std::max(s, t)) +
                                   " outside 0.." + std::to_string(n - 1));
    edges.emplace_back(static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(t));
  }

  Graph g = build_graph(n, edges, directed);
  g.num_classes = num_classes;
  g.feature_dim = feature_dim;
  g.features.assign(n * feature_dim, 0.0);
  for (auto& [id, feats] : rows)
    std::copy(feats.begin(), feats.end(), g.features.begin() + id * feature_dim);

  // labels.tsv: one label per node.
  fs::path lpath = root / "labels.tsv";
  std::ifstream lin = open_or_throw(lpath);
  g.labels.assign(n, -1);
  line_no = 0;
  while (std::getline(lin, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::size_t id;
    long long label;
    if (!(ss >> id >> label)) bad_line(lpath, line_no, "expected node id and label");
    if (id >= n) bad_line(lpath, line_no, "node id " + std::to_string(id) + " out of range");
    if (g.labels[id] != -1) bad_line(lpath, line_no, "duplicate label for node " + std::to_string(id));
    if (label < 0 || label >= static_cast<long long>(num_classes))
      bad_line(lpath, line_no, "label " + std::to_string(label) + " outside 0.." +
                                   std::to_string(num_classes - 1));
    g.labels[id] = static_cast<int>(label);
  }
  for (std::size_t i = 0; i < n; ++i)
    if (g.labels[i] == -1) throw DataError("labels.tsv: node " + std::to_string(i) + " has no label");

  // splits.tsv: optional subset.
  fs::path spath = root / "splits.tsv";
  std::ifstream sin = open_or_throw(spath);
  g.train_mask.assign(n, 0);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  line_no = 0;
  while (std::getline(sin, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::size_t id;
    std::string tag;
    if (!(ss >> id >> tag)) bad_line(spath, line_no, "expected node id and split tag");
    if (id >= n) bad_line(spath, line_no, "node id " + std::to_string(id) + " out of range");
    if (g.train_mask[id] || g.val_mask[id] || g.test_mask[id])
      bad_line(spath, line_no, "node " + std::to_string(id) + " assigned twice");
    if (tag == "train")
      g.train_mask[id] = 1;
    else if (tag == "val")
      g.val_mask[id] = 1;
    else if (tag == "test")
      g.test_mask[id] = 1;
    else
      bad_line(spath, line_no, "unknown split tag '" + tag + "'");
  }
  return g;
}

void save_dataset(const Graph& g, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);

  std::ofstream e(root / "edges.tsv");
  e << "# source target\n";
  for (std::size_t i = 0; i < g.num_edges(); ++i) e << g.src[i] << '\t' << g.tgt[i] << '\n';

  std::ofstream f(root / "features.tsv");
  char buf[32];
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    f << i;
    for (std::size_t d = 0; d < g.feature_dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", g.features[i * g.feature_dim + d]);
      f << '\t' << buf;
    }
    f << '\n';
  }

  std::ofstream l(root / "labels.tsv");
  for (std::size_t i = 0; i < g.num_nodes; ++i) l << i << '\t' << g.labels[i] << '\n';

  std::ofstream s(root / "splits.tsv");
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    if (!g.train_mask.empty() && g.train_mask[i]) s << i << "\ttrain\n";
    else if (!g.val_mask.empty() && g.val_mask[i]) s << i << "\tval\n";
    else if (!g.test_mask.empty() && g.test_mask[i]) s << i << "\ttest\n";
  }

  std::ofstream m(root / "meta.json");
  json meta;
  meta["directed"] = true;
  meta["num_classes"] = g.num_classes;
  m << meta.dump(2) << '\n';
  if (!e || !f || !l || !s || !m) throw DataError("failed writing dataset to '" + dir + "'");
}

void convert_planetoid(const std::string& content_path, const std::string& cites_path,
                       const std::string& out_dir) {
  std::ifstream cin_ = open_or_throw(content_path);
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::uint32_t> id_of;
  std::vector<std::vector<double>> features;
  std::vector<std::string> label_strings;
  std::size_t feature_dim = 0;
  while (std::getline(cin_, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::vector<std::string> cols;
    std::string tok;
    while (ss >> tok) cols.push_back(tok);
    if (cols.size() < 3)
      bad_line(content_path, line_no, "expected id, features, and a label");
    const std::string& pid = cols.front();
    if (id_of.count(pid)) bad_line(content_path, line_no, "duplicate paper id '" + pid + "'");
    std::vector<double> f(cols.size() - 2);
    for (std::size_t i = 1; i + 1 < cols.size(); ++i) {
      try {
        f[i - 1] = std::stod(cols[i]);
      } catch (const std::exception&) {
        bad_line(content_path, line_no, "bad feature value '" + cols[i] + "'");
      }
    }
    if (feature_dim == 0)
      feature_dim = f.size();
    else if (f.size() != feature_dim)
      bad_line(content_path, line_no, "inconsistent feature count");
    id_of.emplace(pid, static_cast<std::uint32_t>(features.size()));
    features.push_back(std::move(f));
    label_strings.push_back(cols.back());
  }
  if (features.empty()) throw DataError("content file has no rows");
  const std::size_t n = features.size();

  std::vector<std::string> classes(label_strings);
  std::sort(classes.begin(), classes.end());
  classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
  auto class_id = [&classes](const std::string& s) {
    return static_cast<int>(std::lower_bound(classes.begin(), classes.end(), s) - classes.begin());
  };

  std::ifstream cit = open_or_throw(cites_path);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  line_no = 0;
  while (std::getline(cit, line)) {
    ++line_no;
    if (is_blank_or_comment(line)) continue;
    std::istringstream ss(line);
    std::string cited, citing;
    if (!(ss >> cited >> citing)) bad_line(cites_path, line_no, "expected two paper ids");
    auto a = id_of.find(cited);
    auto b = id_of.find(citing);
    if (a == id_of.end())
      bad_line(cites_path, line_no, "unknown paper id '" + cited + "'");
    if (b == id_of.end())
      bad_line(cites_path, line_no, "unknown paper id '" + citing + "'");
    if (a->second == b->second) continue;  // self-citation rows are dropped
    edges.emplace_back(b->second, a->second);
  }

  Graph g = build_graph(n, edges, /*directed=*/false);
  g.num_classes = classes.size();
  g.feature_dim = feature_dim;
  g.features.resize(n * feature_dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(features[i].begin(), features[i].end(), g.features.begin() + i * feature_dim);
  g.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) g.labels[i] = class_id(label_strings[i]);

  g.train_mask.assign(n, 0);
  g.val_mask.assign(n, 0);
  g.test_mask.assign(n, 0);
  std::vector<std::size_t> taken(g.num_classes, 0);
  for (std::size_t i = 0; i < n; ++i)
    if (taken[g.labels[i]] < 20) {
      g.train_mask[i] = 1;
      ++taken[g.labels[i]];
    }
  std::size_t val = 0;
  for (std::size_t i = 0; i < n && val < 500; ++i)
    if (!g.train_mask[i]) {
      g.val_mask[i] = 1;
      ++val;
    }
  for (std::size_t i = n > 1000 ? n - 1000 : 0; i < n; ++i)
    if (!g.train_mask[i] && !g.val_mask[i]) g.test_mask[i] = 1;

  save_dataset(g, out_dir);
  // save_dataset writes meta directed=true; the doubled edge list it wrote
  // is already the undirected closure, so that stays correct.
}

}  // namespace car
