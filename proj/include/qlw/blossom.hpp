#pragma once

#include <cstdint>
#include <vector>

namespace qlw {

// Exact maximum-weight matching on a dense general graph via the blossom
// algorithm with dual variables, O(n^3). Weights are int64 and must be
// nonnegative; weight 0 means "no edge". Vertices are 0-based outside,
// 1-based internally.
//
// Callers that need a minimum-weight perfect matching shift weights to
// w' = M - w with M large enough that cardinality dominates, then check
// that the returned matching is perfect.
class WeightedBlossom {
 public:
  explicit WeightedBlossom(int n);

  void set_weight(int u, int v, long long w);  // 0-based endpoints

  // Returns {total weight, number of matched pairs}; mate(v) is -1 for
  // unmatched vertices afterwards.
  std::pair<long long, int> solve();

  int mate(int v) const { return match_[v + 1] - 1; }

 private:
  struct Edge {
    int u = 0, v = 0;
    long long w = 0;
  };

  int n_, n_x_ = 0;
  int lca_stamp_ = 0;
  std::vector<std::vector<Edge>> g_;
  std::vector<long long> lab_;
  std::vector<int> match_, slack_, st_, pa_, s_, vis_;
  std::vector<std::vector<int>> flower_, flower_from_;
  std::vector<int> queue_;
  size_t queue_head_ = 0;

  long long e_delta(const Edge& e) const {
    return lab_[e.u] + lab_[e.v] - g_[e.u][e.v].w * 2;
  }
  void update_slack(int u, int x);
  void set_slack(int x);
  void q_push(int x);
  void set_st(int x, int b);
  int get_pr(int b, int xr);
  void set_match(int u, int v);
  void augment(int u, int v);
  int get_lca(int u, int v);
  void add_blossom(int u, int lca, int v);
  void expand_blossom(int b);
  bool on_found_edge(const Edge& e);
  bool matching_round();
};

}  // namespace qlw
