#pragma once

#include "graphal/common.hpp"

#include <algorithm>

namespace graphal {

/// Labelled / unlabelled partition of the nodes, with observed classes in
/// insertion order. Excluded nodes (held-out test nodes) are in neither set.
class LabelState {
 public:
  LabelState() = default;
  LabelState(NodeId node_count, int class_count, const std::vector<NodeId>& excluded = {})
      : class_count_(class_count), status_(static_cast<std::size_t>(node_count), kUnlabelled) {
    detail::require(node_count > 0, "label state needs at least one node");
    detail::require(class_count > 0, "class count must be positive");
    for (NodeId i : excluded) {
      check_node(i);
      status_[static_cast<std::size_t>(i)] = kExcluded;
    }
  }

  void add(NodeId node, ClassId label) {
    check_node(node);
    detail::require(label >= 0 && label < class_count_,
                    "class " + std::to_string(label) + " out of range");
    auto& s = status_[static_cast<std::size_t>(node)];
    detail::require(s == kUnlabelled, "node " + std::to_string(node) + " is not unlabelled");
    s = static_cast<std::int8_t>(kLabelledBase);
    order_.push_back(node);
    labels_.push_back(label);
  }

  LabelState with(NodeId node, ClassId label) const {
    LabelState copy = *this;
    copy.add(node, label);
    return copy;
  }

  NodeId node_count() const { return static_cast<NodeId>(status_.size()); }
  int class_count() const { return class_count_; }
  std::size_t size() const { return order_.size(); }
  bool empty() const { return order_.empty(); }

  const std::vector<NodeId>& labelled() const { return order_; }
  const std::vector<ClassId>& labels() const { return labels_; }

  bool is_labelled(NodeId i) const { return status_.at(static_cast<std::size_t>(i)) == kLabelledBase; }
  bool is_unlabelled(NodeId i) const { return status_.at(static_cast<std::size_t>(i)) == kUnlabelled; }
  bool is_excluded(NodeId i) const { return status_.at(static_cast<std::size_t>(i)) == kExcluded; }

  /// Unlabelled, non-excluded nodes in ascending order.
  std::vector<NodeId> unlabelled() const {
    std::vector<NodeId> out;
    out.reserve(status_.size() - order_.size());
    for (std::size_t i = 0; i < status_.size(); ++i)
      if (status_[i] == kUnlabelled) out.push_back(static_cast<NodeId>(i));
    return out;
  }

  std::size_t unlabelled_count() const {
    return static_cast<std::size_t>(std::count(status_.begin(), status_.end(), kUnlabelled));
  }

  /// The first `count` labels in insertion order.
  LabelState prefix(std::size_t count) const {
    LabelState out = *this;
    for (std::size_t t = count; t < order_.size(); ++t)
      out.status_[static_cast<std::size_t>(order_[t])] = kUnlabelled;
    out.order_.resize(std::min(count, order_.size()));
    out.labels_.resize(out.order_.size());
    return out;
  }

 private:
  static constexpr std::int8_t kUnlabelled = 0;
  static constexpr std::int8_t kLabelledBase = 1;
  static constexpr std::int8_t kExcluded = 2;

  void check_node(NodeId i) const {
    detail::require(i >= 0 && i < node_count(), "node " + std::to_string(i) + " out of range");
  }

  int class_count_ = 0;
  std::vector<std::int8_t> status_;
  std::vector<NodeId> order_;
  std::vector<ClassId> labels_;
};

/// Gathers the given rows of a dense matrix.
inline Matrix gather_rows(const Matrix& x, const std::vector<NodeId>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i)
    out.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

}  // namespace graphal
