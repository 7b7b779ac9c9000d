#include "fracount/treeroll.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>

#include "fracount/rng.hpp"

namespace fracount::treeroll {
namespace {

double entropy_bits(const Vec& counts) {
  const double total = counts.sum();
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (int c = 0; c < counts.size(); ++c) {
    if (counts[c] > 0.0) {
      double p = counts[c] / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

Vec leaf_probs(const std::vector<Observation>& obs, int n_classes, double now,
               const TreeOptions& opts) {
  Vec counts = weighted_counts(obs, n_classes, now, opts.half_life);
  counts.array() += opts.smoothing;
  return counts / counts.sum();
}

std::vector<double> candidate_thresholds(std::vector<double> values, int max_thresholds) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> cuts;
  if (values.size() < 2) return cuts;
  if (static_cast<int>(values.size()) - 1 <= max_thresholds) {
    for (std::size_t i = 0; i + 1 < values.size(); ++i)
      cuts.push_back(0.5 * (values[i] + values[i + 1]));
  } else {
    for (int t = 1; t <= max_thresholds; ++t) {
      std::size_t i = t * (values.size() - 1) / (max_thresholds + 1);
      cuts.push_back(0.5 * (values[i] + values[i + 1]));
    }
  }
  return cuts;
}

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double gain = -1.0;
};

// best information-gain split per feature, honoring min_leaf on raw counts
std::vector<SplitChoice> per_feature_best(const std::vector<Observation>& obs, int n_classes,
                                          double now, const TreeOptions& opts) {
  const int d = static_cast<int>(obs[0].features.size());
  Vec total = weighted_counts(obs, n_classes, now, opts.half_life);
  const double h_parent = entropy_bits(total);
  const double w_total = total.sum();
  std::vector<SplitChoice> best(d);
  for (int f = 0; f < d; ++f) {
    std::vector<double> values;
    values.reserve(obs.size());
    for (const auto& o : obs) values.push_back(o.features[f]);
    for (double c : candidate_thresholds(std::move(values), opts.max_thresholds)) {
      Vec left = Vec::Zero(n_classes);
      int n_left = 0;
      for (const auto& o : obs)
        if (o.features[f] <= c) {
          left[o.label] += stale_evidence_weight(now - o.timestamp, opts.half_life);
          ++n_left;
        }
      int n_right = static_cast<int>(obs.size()) - n_left;
      if (n_left < opts.min_leaf || n_right < opts.min_leaf) continue;
      Vec right = total - left;
      double wl = left.sum(), wr = right.sum();
      if (wl <= 0.0 || wr <= 0.0) continue;
      double gain =
          h_parent - (wl / w_total) * entropy_bits(left) - (wr / w_total) * entropy_bits(right);
      if (gain > best[f].gain) best[f] = SplitChoice{f, c, gain};
    }
    if (best[f].gain < 0.0) best[f] = SplitChoice{f, 0.0, -1.0};
  }
  return best;
}

// split decision at a leaf: best-vs-second-best feature gap against the bound
std::optional<SplitChoice> hoeffding_split(const std::vector<Observation>& obs, int n_classes,
                                           double now, const TreeOptions& opts) {
  if (static_cast<int>(obs.size()) < 2 * opts.min_leaf) return std::nullopt;
  auto per_feature = per_feature_best(obs, n_classes, now, opts);
  SplitChoice best, second;
  for (const auto& s : per_feature) {
    if (s.gain > best.gain) {
      second = best;
      best = s;
    } else if (s.gain > second.gain) {
      second = s;
    }
  }
  if (best.feature < 0 || best.gain <= 1e-12) return std::nullopt;
  const double r = std::log2(static_cast<double>(n_classes));
  const double eps =
      std::sqrt(r * r * std::log(1.0 / opts.hoeffding_delta) / (2.0 * obs.size()));
  const double runner_up = std::max(second.gain, 0.0);
  if (best.gain - runner_up > eps) return best;
  return std::nullopt;
}

}  // namespace

double stale_evidence_weight(double age, double half_life) {
  if (half_life < 0.0) throw std::invalid_argument("stale_evidence_weight: negative half-life");
  if (half_life == 0.0) return age <= 0.0 ? 1.0 : 0.0;
  if (age <= 0.0) return 1.0;
  return std::exp2(-age / half_life);
}

Vec weighted_counts(const std::vector<Observation>& obs, int n_classes, double now,
                    double half_life) {
  Vec counts = Vec::Zero(n_classes);
  for (const auto& o : obs)
    counts[o.label] += stale_evidence_weight(now - o.timestamp, half_life);
  return counts;
}

TreeModel::TreeModel(int n_classes, TreeOptions opts) : n_classes_(n_classes), opts_(opts) {}

int TreeModel::route(const Vec& features) const {
  if (root_ < 0) throw std::logic_error("TreeModel: empty tree");
  int id = root_;
  while (!nodes_[id].is_leaf()) {
    const auto& n = nodes_[id];
    if (n.feature >= features.size())
      throw std::invalid_argument("TreeModel: feature dimension too small");
    id = features[n.feature] <= n.threshold ? n.left : n.right;
  }
  return id;
}

Vec TreeModel::predict(const Vec& features) const { return nodes_[route(features)].probs; }

std::vector<int> TreeModel::leaves_under(int node_id) const {
  std::vector<int> out, stack{node_id};
  while (!stack.empty()) {
    int id = stack.back();
    stack.pop_back();
    if (nodes_[id].is_leaf()) {
      out.push_back(id);
    } else {
      stack.push_back(nodes_[id].left);
      stack.push_back(nodes_[id].right);
    }
  }
  return out;
}

namespace {

struct TreeEditorImpl;

}  // namespace

// grants tests and roll_tree controlled mutation access
struct TreeEditor {
  TreeModel& t;
  std::vector<Node>& nodes() { return t.nodes_; }
  int& root() { return t.root_; }

  int add_leaf(int parent, std::vector<Observation> obs, double now) {
    Node n;
    n.id = static_cast<int>(t.nodes_.size());
    n.parent = parent;
    n.obs = std::move(obs);
    n.probs = leaf_probs(n.obs, t.n_classes_, now, t.opts_);
    t.nodes_.push_back(std::move(n));
    return t.nodes_.back().id;
  }

  // recursive Hoeffding growth at a (new or existing) leaf position
  int grow(int parent, std::vector<Observation> obs, double now) {
    auto split = hoeffding_split(obs, t.n_classes_, now, t.opts_);
    if (!split) return add_leaf(parent, std::move(obs), now);
    Node n;
    n.id = static_cast<int>(t.nodes_.size());
    n.parent = parent;
    n.feature = split->feature;
    n.threshold = split->threshold;
    n.probs = Vec();
    t.nodes_.push_back(n);
    const int id = t.nodes_.back().id;
    std::vector<Observation> left, right;
    for (auto& o : obs)
      (o.features[split->feature] <= split->threshold ? left : right).push_back(std::move(o));
    int l = grow(id, std::move(left), now);
    int r = grow(id, std::move(right), now);
    t.nodes_[id].left = l;
    t.nodes_[id].right = r;
    return id;
  }

  void make_leaf(int id, std::vector<Observation> obs, double now) {
    Node& n = t.nodes_[id];
    n.feature = -1;
    n.left = n.right = -1;
    n.obs = std::move(obs);
    n.probs = leaf_probs(n.obs, t.n_classes_, now, t.opts_);
  }

  // drop unreachable nodes and renumber ids depth-first
  void compact() {
    if (t.root_ < 0) return;
    std::vector<Node> fresh;
    std::map<int, int> remap;
    std::vector<int> stack{t.root_};
    std::vector<int> order;
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      order.push_back(id);
      if (!t.nodes_[id].is_leaf()) {
        stack.push_back(t.nodes_[id].right);
        stack.push_back(t.nodes_[id].left);
      }
    }
    for (int old_id : order) {
      remap[old_id] = static_cast<int>(fresh.size());
      fresh.push_back(t.nodes_[old_id]);
    }
    for (auto& n : fresh) {
      n.id = remap[n.id];
      if (n.parent >= 0) n.parent = remap[n.parent];
      if (!n.is_leaf()) {
        n.left = remap[n.left];
        n.right = remap[n.right];
      }
    }
    t.nodes_ = std::move(fresh);
    t.root_ = 0;
  }
};

TreeModel grow_initial(const std::vector<Observation>& data, int n_classes,
                       const TreeOptions& opts) {
  if (data.empty()) throw std::invalid_argument("grow_initial: empty input");
  if (n_classes < 2) throw std::invalid_argument("grow_initial: need at least 2 classes");
  for (const auto& o : data)
    if (o.label < 0 || o.label >= n_classes)
      throw std::invalid_argument("grow_initial: label out of range");
  TreeModel t(n_classes, opts);
  double now = 0.0;
  for (const auto& o : data) now = std::max(now, o.timestamp);
  TreeEditor ed{t};
  ed.root() = ed.grow(-1, data, now);
  return t;
}

namespace {

double log_loss(const TreeModel& m, const Observation& o) {
  return -std::log(std::max(m.predict(o.features)[o.label], 1e-300));
}

double mean_delta_eps(const TreeModel& cand, const std::vector<double>& prev_loss,
                      const std::vector<Observation>& val) {
  if (val.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) acc += prev_loss[i] - log_loss(cand, val[i]);
  return acc / static_cast<double>(val.size());
}

double churn_fraction(const TreeModel& cand, const std::vector<Vec>& prev_pred,
                      const std::vector<Vec>& non_updated, double eta) {
  if (non_updated.empty()) return 0.0;
  std::size_t changed = 0;
  for (std::size_t i = 0; i < non_updated.size(); ++i) {
    if ((cand.predict(non_updated[i]) - prev_pred[i]).lpNorm<1>() > eta) ++changed;
  }
  return static_cast<double>(changed) / static_cast<double>(non_updated.size());
}

struct Edit {
  int node_id = 0;
  int kind = 0;  // 0 refresh, 1 split, 2 collapse
};

TreeModel apply_edit(const TreeModel& base, const Edit& e,
                     const std::map<int, std::vector<Observation>>& train_by_leaf,
                     double now) {
  TreeModel t = base;
  TreeEditor ed{t};
  auto merged = [&](const std::vector<int>& leaf_ids) {
    std::vector<Observation> obs;
    for (int id : leaf_ids) {
      const auto& leaf = t.nodes()[id];
      obs.insert(obs.end(), leaf.obs.begin(), leaf.obs.end());
      auto it = train_by_leaf.find(id);
      if (it != train_by_leaf.end()) obs.insert(obs.end(), it->second.begin(), it->second.end());
    }
    return obs;
  };
  switch (e.kind) {
    case 0:
      ed.make_leaf(e.node_id, merged({e.node_id}), now);
      break;
    case 1: {
      auto obs = merged({e.node_id});
      int parent = t.nodes()[e.node_id].parent;
      int grown = ed.grow(parent, std::move(obs), now);
      if (parent < 0) {
        ed.root() = grown;
      } else {
        Node& p = ed.nodes()[parent];
        (p.left == e.node_id ? p.left : p.right) = grown;
      }
      break;
    }
    case 2:
      ed.make_leaf(e.node_id, merged(base.leaves_under(e.node_id)), now);
      break;
  }
  ed.compact();
  return t;
}

}  // namespace

std::pair<TreeModel, UpdateReport> roll_tree(const TreeModel& model,
                                             const std::vector<Observation>& d_t,
                                             const std::vector<Vec>& non_updated,
                                             const RollOptions& opts) {
  if (opts.bound < 0.0) throw std::invalid_argument("roll_tree: bound must be >= 0");
  UpdateReport report;
  if (d_t.empty()) return {model, report};

  // deterministic 50/50 train/validation split by record-id hash
  std::vector<Observation> train, val;
  for (const auto& o : d_t)
    (splitmix64(static_cast<std::uint64_t>(o.id)) & 1 ? val : train).push_back(o);
  if (train.empty() || val.empty()) {
    train.clear();
    val.clear();
    for (std::size_t i = 0; i < d_t.size(); ++i)
      (i % 2 ? val : train).push_back(d_t[i]);
  }
  if (train.empty() || val.empty()) return {model, report};

  std::vector<double> prev_loss(val.size());
  for (std::size_t i = 0; i < val.size(); ++i) prev_loss[i] = log_loss(model, val[i]);
  std::vector<Vec> prev_pred(non_updated.size());
  for (std::size_t i = 0; i < non_updated.size(); ++i)
    prev_pred[i] = model.predict(non_updated[i]);

  TreeModel work = model;
  double cur_eps = 0.0;
  bool any = false;
  for (int round = 0; round < opts.max_edits; ++round) {
    // candidates regenerated against the current working tree
    std::map<int, std::vector<Observation>> train_by_leaf;
    for (const auto& o : train) train_by_leaf[work.route(o.features)].push_back(o);
    std::vector<Edit> candidates;
    for (const auto& [leaf_id, obs] : train_by_leaf) {
      candidates.push_back(Edit{leaf_id, 0});
      candidates.push_back(Edit{leaf_id, 1});
    }
    for (const auto& n : work.nodes())
      if (!n.is_leaf()) candidates.push_back(Edit{n.id, 2});

    bool found = false;
    TreeModel best_tree;
    double best_eps = 0.0, best_m = 0.0;
    int best_node = 0;
    for (const auto& e : candidates) {
      TreeModel cand = apply_edit(work, e, train_by_leaf, opts.now);
      double eps = mean_delta_eps(cand, prev_loss, val);
      double m = churn_fraction(cand, prev_pred, non_updated, opts.eta);
      if (m > opts.bound || eps <= cur_eps + opts.accept_margin) continue;
      bool better = !found || eps > best_eps ||
                    (eps == best_eps && (m < best_m || (m == best_m && e.node_id < best_node)));
      if (better) {
        found = true;
        best_tree = cand;
        best_eps = eps;
        best_m = m;
        best_node = e.node_id;
      }
    }
    if (!found) break;
    work = std::move(best_tree);
    cur_eps = best_eps;
    any = true;
  }

  if (!any) return {model, report};
  report.accepted = true;
  report.delta_eps = cur_eps;
  report.delta_m = churn_fraction(work, prev_pred, non_updated, opts.eta);
  return {std::move(work), report};
}

std::vector<FractionalCounter> tree_counters(const TreeModel& model,
                                             const std::vector<PersonRecord>& pd) {
  const int c = model.n_classes();
  std::vector<FractionalCounter> out;
  out.reserve(pd.size());
  for (const auto& rec : pd) {
    Vec p = model.predict(rec.covariates);
    FractionalCounter fc;
    fc.mu = Vec::Zero(rec.q());
    for (int j = 0; j < std::min(rec.q(), c - 1); ++j) fc.mu[j] = p[j];
    fc.xi = p[c - 1];
    double total = fc.mu.sum() + fc.xi;
    if (total > 0.0) {
      fc.mu /= total;
      fc.xi /= total;
    } else {
      fc.mu.setConstant(1.0 / (rec.q() + 1));
      fc.xi = 1.0 / (rec.q() + 1);
    }
    out.push_back(std::move(fc));
  }
  return out;
}

std::vector<double> tree_theta(const TreeModel& model, const std::vector<PersonRecord>& pd) {
  if (model.n_classes() != 2)
    throw std::invalid_argument("tree_theta: needs a binary {in-scope, erroneous} tree");
  std::vector<double> theta;
  theta.reserve(pd.size());
  for (const auto& rec : pd) theta.push_back(model.predict(rec.covariates)[1]);
  return theta;
}

void save_tree(const TreeModel& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out.precision(17);
  const auto& opts = model.options();
  out << "fracount-tree v1\n";
  out << "n_classes " << model.n_classes() << "\n";
  out << "options " << opts.hoeffding_delta << ' ' << opts.min_leaf << ' ' << opts.smoothing
      << ' ' << opts.half_life << ' ' << opts.max_thresholds << "\n";
  out << "nodes " << model.nodes().size() << "\n";
  for (const auto& n : model.nodes()) {
    if (n.is_leaf()) {
      out << "node " << n.id << ' ' << n.parent << " leaf";
      for (int c = 0; c < n.probs.size(); ++c) out << ' ' << n.probs[c];
      out << " obs " << n.obs.size() << "\n";
      for (const auto& o : n.obs) {
        out << "obs " << o.id << ' ' << o.label << ' ' << o.timestamp << ' '
            << o.features.size();
        for (int j = 0; j < o.features.size(); ++j) out << ' ' << o.features[j];
        out << "\n";
      }
    } else {
      out << "node " << n.id << ' ' << n.parent << " internal " << n.feature << ' '
          << n.threshold << ' ' << n.left << ' ' << n.right << "\n";
    }
  }
}

TreeModel load_tree(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string word;
  in >> word;  // fracount-tree
  std::string version;
  in >> version;
  if (word != "fracount-tree" || version != "v1")
    throw std::runtime_error("load_tree: unrecognized format in " + path);
  TreeModel t;
  std::size_t n_nodes = 0;
  in >> word >> t.n_classes_;
  in >> word >> t.opts_.hoeffding_delta >> t.opts_.min_leaf >> t.opts_.smoothing >>
      t.opts_.half_life >> t.opts_.max_thresholds;
  in >> word >> n_nodes;
  t.nodes_.resize(n_nodes);
  for (std::size_t i = 0; i < n_nodes; ++i) {
    Node n;
    std::string kind;
    in >> word >> n.id >> n.parent >> kind;
    if (kind == "internal") {
      in >> n.feature >> n.threshold >> n.left >> n.right;
    } else {
      n.probs.resize(t.n_classes_);
      for (int c = 0; c < t.n_classes_; ++c) in >> n.probs[c];
      std::size_t n_obs = 0;
      in >> word >> n_obs;
      n.obs.resize(n_obs);
      for (auto& o : n.obs) {
        int d = 0;
        in >> word >> o.id >> o.label >> o.timestamp >> d;
        o.features.resize(d);
        for (int j = 0; j < d; ++j) in >> o.features[j];
      }
    }
    if (!in) throw std::runtime_error("load_tree: truncated file " + path);
    t.nodes_[n.id] = std::move(n);
  }
  t.root_ = 0;
  return t;
}

}  // namespace fracount::treeroll
