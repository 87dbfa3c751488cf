#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace weakhier {

using NodeIndex = std::size_t;

enum class SupervisionMode { kNone, kKeywords, kDocuments };

/// Keywords (word list) or labeled document ids. Internal nodes start empty
/// and are filled by propagate_supervision.
struct WeakSupervision {
  SupervisionMode mode = SupervisionMode::kNone;
  std::vector<std::string> items;

  bool empty() const { return items.empty(); }
  bool operator==(const WeakSupervision&) const = default;
};

struct ClassNode {
  std::string id;
  std::optional<NodeIndex> parent;
  std::vector<NodeIndex> children;
  WeakSupervision supervision;
  int level = 0;

  bool is_leaf() const { return children.empty(); }
  bool operator==(const ClassNode&) const = default;
};

class Taxonomy {
 public:
  /// Nodes are stored in pre-order; index 0 is the root.
  explicit Taxonomy(std::vector<ClassNode> nodes);

  const ClassNode& node(NodeIndex i) const { return nodes_.at(i); }
  ClassNode& node(NodeIndex i) { return nodes_.at(i); }
  const std::vector<ClassNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }
  NodeIndex root() const { return 0; }
  int max_level() const { return max_level_; }

  std::optional<NodeIndex> find(std::string_view id) const;
  NodeIndex index_of(std::string_view id) const;  // throws on unknown id

  std::vector<NodeIndex> nodes_at_level(int level) const;
  std::vector<NodeIndex> leaves() const;
  /// Nodes with >= 2 children; these own a local classifier.
  std::vector<NodeIndex> classifier_nodes() const;

  /// Classes a level-k global classifier distributes over: nodes at level k
  /// plus leaves that end above level k.
  std::vector<NodeIndex> frontier(int level) const;

  /// Root-first path, inclusive of both ends.
  std::vector<NodeIndex> path_from_root(NodeIndex i) const;
  /// Ancestor at `level`, or the node itself if it is shallower.
  NodeIndex ancestor_at_level(NodeIndex i, int level) const;
  bool is_ancestor(NodeIndex ancestor, NodeIndex node) const;

  SupervisionMode mode() const;

  bool operator==(const Taxonomy& other) const { return nodes_ == other.nodes_; }

 private:
  std::vector<ClassNode> nodes_;
  int max_level_ = 0;
};

/// Parses the nested JSON tree: {"name", "children": [...], "keywords"|"doc_ids": [...]}.
Taxonomy parse_taxonomy(std::string_view json_text);
Taxonomy load_taxonomy(const std::filesystem::path& path);
std::string taxonomy_to_json(const Taxonomy& taxonomy, bool include_internal_supervision = false);
void save_taxonomy(const std::filesystem::path& path, const Taxonomy& taxonomy);

/// Internal node supervision := union of descendant-leaf supervision, in
/// child order with duplicates removed. Leaves are unchanged.
Taxonomy propagate_supervision(const Taxonomy& taxonomy);

}  // namespace weakhier
