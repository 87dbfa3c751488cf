#include "weakhier/taxonomy.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "weakhier/error.hpp"

namespace weakhier {

using nlohmann::json;

Taxonomy::Taxonomy(std::vector<ClassNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw StructureError("taxonomy has no nodes");
  if (nodes_[0].parent) throw StructureError("node 0 must be the root");
  std::unordered_map<std::string, NodeIndex> seen;
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (!seen.emplace(n.id, i).second) throw StructureError("duplicate class id '" + n.id + "'");
    if (i != 0) {
      if (!n.parent || *n.parent >= nodes_.size())
        throw StructureError("class '" + n.id + "' is unreachable from the root");
      const auto& siblings = nodes_[*n.parent].children;
      if (std::count(siblings.begin(), siblings.end(), i) != 1)
        throw StructureError("class '" + n.id + "' is not listed under its parent");
      if (n.level != nodes_[*n.parent].level + 1)
        throw StructureError("class '" + n.id + "' has inconsistent level");
    } else if (n.level != 0) {
      throw StructureError("root level must be 0");
    }
    for (NodeIndex c : n.children)
      if (c >= nodes_.size() || nodes_[c].parent != i)
        throw StructureError("class '" + n.id + "' lists a child with a different parent");
    max_level_ = std::max(max_level_, n.level);
  }
}

std::optional<NodeIndex> Taxonomy::find(std::string_view id) const {
  for (NodeIndex i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return i;
  return std::nullopt;
}

NodeIndex Taxonomy::index_of(std::string_view id) const {
  if (auto i = find(id)) return *i;
  throw ValidationError("unknown class id '" + std::string(id) + "'");
}

std::vector<NodeIndex> Taxonomy::nodes_at_level(int level) const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].level == level) out.push_back(i);
  return out;
}

std::vector<NodeIndex> Taxonomy::leaves() const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].is_leaf()) out.push_back(i);
  return out;
}

std::vector<NodeIndex> Taxonomy::classifier_nodes() const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].children.size() >= 2) out.push_back(i);
  return out;
}

std::vector<NodeIndex> Taxonomy::frontier(int level) const {
  std::vector<NodeIndex> out;
  for (NodeIndex i = 0; i < nodes_.size(); ++i) {
    const auto& n = nodes_[i];
    if (n.level == level || (n.level < level && n.is_leaf())) out.push_back(i);
  }
  return out;
}

std::vector<NodeIndex> Taxonomy::path_from_root(NodeIndex i) const {
  std::vector<NodeIndex> path{i};
  while (nodes_.at(path.back()).parent) path.push_back(*nodes_[path.back()].parent);
  std::reverse(path.begin(), path.end());
  return path;
}

NodeIndex Taxonomy::ancestor_at_level(NodeIndex i, int level) const {
  while (nodes_.at(i).level > level) i = *nodes_[i].parent;
  return i;
}

bool Taxonomy::is_ancestor(NodeIndex ancestor, NodeIndex node) const {
  for (;;) {
    if (node == ancestor) return true;
    if (!nodes_.at(node).parent) return false;
    node = *nodes_[node].parent;
  }
}

SupervisionMode Taxonomy::mode() const {
  SupervisionMode mode = SupervisionMode::kNone;
  for (NodeIndex leaf : leaves()) {
    const auto m = nodes_[leaf].supervision.mode;
    if (mode == SupervisionMode::kNone) mode = m;
    else if (m != mode) throw ValidationError("mixed supervision modes across leaves");
  }
  return mode;
}

namespace {

void parse_node(const json& j, std::optional<NodeIndex> parent, int level,
                std::vector<ClassNode>& nodes, std::vector<std::string>& ancestors) {
  if (!j.is_object() || !j.contains("name") || !j["name"].is_string())
    throw ParseError("taxonomy node without a string 'name'");
  const auto name = j["name"].get<std::string>();
  if (std::find(ancestors.begin(), ancestors.end(), name) != ancestors.end())
    throw StructureError("class '" + name + "' is listed as its own ancestor");
  for (const auto& n : nodes)
    if (n.id == name) throw StructureError("class '" + name + "' has multiple parents");

  const NodeIndex self = nodes.size();
  ClassNode node;
  node.id = name;
  node.parent = parent;
  node.level = level;
  const bool has_kw = j.contains("keywords");
  const bool has_docs = j.contains("doc_ids");
  if (has_kw && has_docs) throw ValidationError("class '" + name + "' mixes keywords and doc_ids");
  if (has_kw) {
    node.supervision.mode = SupervisionMode::kKeywords;
    node.supervision.items = j["keywords"].get<std::vector<std::string>>();
  } else if (has_docs) {
    node.supervision.mode = SupervisionMode::kDocuments;
    node.supervision.items = j["doc_ids"].get<std::vector<std::string>>();
  }
  nodes.push_back(std::move(node));
  if (parent) nodes[*parent].children.push_back(self);

  ancestors.push_back(name);
  if (j.contains("children"))
    for (const auto& c : j["children"]) parse_node(c, self, level + 1, nodes, ancestors);
  ancestors.pop_back();

  auto& me = nodes[self];
  if (me.is_leaf() && me.supervision.empty())
    throw ValidationError("leaf class '" + name + "' has no supervision");
}

json node_to_json(const Taxonomy& t, NodeIndex i, bool internal_supervision) {
  const auto& n = t.node(i);
  json j{{"name", n.id}};
  if (n.is_leaf() || internal_supervision) {
    if (n.supervision.mode == SupervisionMode::kKeywords) j["keywords"] = n.supervision.items;
    if (n.supervision.mode == SupervisionMode::kDocuments) j["doc_ids"] = n.supervision.items;
  }
  if (!n.is_leaf()) {
    j["children"] = json::array();
    for (NodeIndex c : n.children) j["children"].push_back(node_to_json(t, c, internal_supervision));
  }
  return j;
}

}  // namespace

Taxonomy parse_taxonomy(std::string_view json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("taxonomy: ") + e.what());
  }
  std::vector<ClassNode> nodes;
  std::vector<std::string> ancestors;
  try {
    parse_node(j, std::nullopt, 0, nodes, ancestors);
  } catch (const json::exception& e) {
    throw ParseError(std::string("taxonomy: ") + e.what());
  }
  Taxonomy t(std::move(nodes));
  t.mode();  // rejects mixed modes
  return t;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open taxonomy " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_taxonomy(ss.str());
}

std::string taxonomy_to_json(const Taxonomy& taxonomy, bool include_internal_supervision) {
  return node_to_json(taxonomy, taxonomy.root(), include_internal_supervision).dump(2);
}

void save_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write " + path.string());
  out << taxonomy_to_json(taxonomy) << '\n';
}

Taxonomy propagate_supervision(const Taxonomy& taxonomy) {
  const auto mode = taxonomy.mode();
  auto nodes = taxonomy.nodes();
  for (NodeIndex leaf : taxonomy.leaves())
    if (nodes[leaf].supervision.empty())
      throw ValidationError("leaf class '" + nodes[leaf].id + "' has no supervision");

  std::function<const WeakSupervision&(NodeIndex)> visit = [&](NodeIndex i) -> const WeakSupervision& {
    auto& n = nodes[i];
    if (n.is_leaf()) return n.supervision;
    WeakSupervision merged{mode, {}};
    std::unordered_set<std::string> seen;
    for (NodeIndex c : n.children)
      for (const auto& item : visit(c).items)
        if (seen.insert(item).second) merged.items.push_back(item);
    n.supervision = std::move(merged);
    return n.supervision;
  };
  visit(taxonomy.root());
  return Taxonomy(std::move(nodes));
}

}  // namespace weakhier
