#pragma once

#include <string>
#include <vector>

#include "fracount/types.hpp"

namespace fracount::treeroll {

struct Observation {
  std::int64_t id = 0;  // drives the deterministic train/validation split
  Vec features;
  int label = 0;  // 0..n_classes-1
  double timestamp = 0.0;
};

struct Node {
  int id = 0;
  int parent = -1;
  // internal node
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;  // left: x[feature] <= threshold
  // leaf
  Vec probs;
  std::vector<Observation> obs;  // per-leaf evidence with timestamps

  bool is_leaf() const { return left < 0; }
};

struct TreeOptions {
  double hoeffding_delta = 1e-4;
  int min_leaf = 30;
  double smoothing = 1e-3;        // additive count per class in leaf estimates
  double half_life = 1e300;       // evidence ageing, effectively off by default
  int max_thresholds = 64;        // candidate cut points per feature
};

class TreeModel {
 public:
  TreeModel() = default;
  TreeModel(int n_classes, TreeOptions opts);

  int n_classes() const { return n_classes_; }
  const TreeOptions& options() const { return opts_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  int route(const Vec& features) const;  // leaf node id
  Vec predict(const Vec& features) const;

  // ids of all leaves under (and including) a node
  std::vector<int> leaves_under(int node_id) const;

  friend TreeModel grow_initial(const std::vector<Observation>&, int, const TreeOptions&);
  friend struct TreeEditor;
  friend TreeModel load_tree(const std::string&);

 private:
  int n_classes_ = 0;
  TreeOptions opts_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

// Batch growth with Hoeffding-bound split decisions: a split is installed only
// when the information-gain gap clears sqrt(R^2 ln(1/delta) / 2n).
TreeModel grow_initial(const std::vector<Observation>& data, int n_classes,
                       const TreeOptions& opts = {});

struct UpdateReport {
  double delta_eps = 0.0;  // held-out log-loss improvement on updated units
  double delta_m = 0.0;    // churn fraction on non-updated units
  bool accepted = false;
};

struct RollOptions {
  double bound = 0.1;         // upper bound B on delta_m
  double eta = 0.05;          // L1 tolerance defining a "changed" prediction
  double accept_margin = 0.02;  // minimum delta_eps gain per accepted edit
  double now = 0.0;           // reference time for evidence ageing
  int max_edits = 16;
};

// Greedy constrained update: candidate edits (leaf refresh, new split, subtree
// collapse) are scored against the frozen previous tree; the delta_eps-best
// sequence with delta_m <= bound is accepted, otherwise the tree is unchanged.
std::pair<TreeModel, UpdateReport> roll_tree(const TreeModel& model,
                                             const std::vector<Observation>& d_t,
                                             const std::vector<Vec>& non_updated,
                                             const RollOptions& opts);

double stale_evidence_weight(double age, double half_life);

// age-weighted class counts of a leaf's evidence
Vec weighted_counts(const std::vector<Observation>& obs, int n_classes, double now,
                    double half_life);

// Placement counters from a tree over (position 1..C-1, displaced): positions
// beyond q_k are masked and the vector renormalized onto the simplex.
std::vector<FractionalCounter> tree_counters(const TreeModel& model,
                                             const std::vector<PersonRecord>& pd);

// theta from a binary {in-scope, erroneous} tree
std::vector<double> tree_theta(const TreeModel& model, const std::vector<PersonRecord>& pd);

void save_tree(const TreeModel& model, const std::string& path);
TreeModel load_tree(const std::string& path);

}  // namespace fracount::treeroll
