#include "qlw/blossom.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace qlw {

namespace {
constexpr long long kInf = std::numeric_limits<long long>::max();
}

WeightedBlossom::WeightedBlossom(int n) : n_(n) {
  if (n < 0) throw std::invalid_argument("negative vertex count");
  const int cap = 2 * n_ + 1;
  g_.assign(cap, std::vector<Edge>(cap));
  for (int u = 0; u < cap; ++u)
    for (int v = 0; v < cap; ++v) g_[u][v] = {u, v, 0};
  lab_.assign(cap, 0);
  match_.assign(cap, 0);
  slack_.assign(cap, 0);
  st_.assign(cap, 0);
  pa_.assign(cap, 0);
  s_.assign(cap, -1);
  vis_.assign(cap, 0);
  flower_.assign(cap, {});
  flower_from_.assign(cap, std::vector<int>(n_ + 1, 0));
}

void WeightedBlossom::set_weight(int u, int v, long long w) {
  if (u < 0 || v < 0 || u >= n_ || v >= n_ || u == v)
    throw std::invalid_argument("bad matching edge");
  if (w < 0) throw std::invalid_argument("blossom weights must be nonnegative");
  g_[u + 1][v + 1].w = w;
  g_[v + 1][u + 1].w = w;
}

void WeightedBlossom::update_slack(int u, int x) {
  if (!slack_[x] || e_delta(g_[u][x]) < e_delta(g_[slack_[x]][x])) slack_[x] = u;
}

void WeightedBlossom::set_slack(int x) {
  slack_[x] = 0;
  for (int u = 1; u <= n_; ++u) {
    if (g_[u][x].w > 0 && st_[u] != x && s_[st_[u]] == 0) update_slack(u, x);
  }
}

void WeightedBlossom::q_push(int x) {
  if (x <= n_) {
    queue_.push_back(x);
  } else {
    for (int p : flower_[x]) q_push(p);
  }
}

void WeightedBlossom::set_st(int x, int b) {
  st_[x] = b;
  if (x > n_) {
    for (int p : flower_[x]) set_st(p, b);
  }
}

int WeightedBlossom::get_pr(int b, int xr) {
  int pr = static_cast<int>(std::find(flower_[b].begin(), flower_[b].end(), xr) -
                            flower_[b].begin());
  if (pr % 2 == 1) {
    std::reverse(flower_[b].begin() + 1, flower_[b].end());
    return static_cast<int>(flower_[b].size()) - pr;
  }
  return pr;
}

void WeightedBlossom::set_match(int u, int v) {
  match_[u] = g_[u][v].v;
  if (u <= n_) return;
  const Edge& e = g_[u][v];
  int xr = flower_from_[u][e.u];
  int pr = get_pr(u, xr);
  for (int i = 0; i < pr; ++i) set_match(flower_[u][i], flower_[u][i ^ 1]);
  set_match(xr, v);
  std::rotate(flower_[u].begin(), flower_[u].begin() + pr, flower_[u].end());
}

void WeightedBlossom::augment(int u, int v) {
  while (true) {
    int xnv = st_[match_[u]];
    set_match(u, v);
    if (!xnv) return;
    set_match(xnv, st_[pa_[xnv]]);
    u = st_[pa_[xnv]];
    v = xnv;
  }
}

int WeightedBlossom::get_lca(int u, int v) {
  for (++lca_stamp_; u || v; std::swap(u, v)) {
    if (u == 0) continue;
    if (vis_[u] == lca_stamp_) return u;
    vis_[u] = lca_stamp_;
    u = st_[match_[u]];
    if (u) u = st_[pa_[u]];
  }
  return 0;
}

void WeightedBlossom::add_blossom(int u, int lca, int v) {
  int b = n_ + 1;
  while (b <= n_x_ && st_[b]) ++b;
  if (b > n_x_) ++n_x_;
  lab_[b] = 0;
  s_[b] = 0;
  match_[b] = match_[lca];
  flower_[b].clear();
  flower_[b].push_back(lca);
  for (int x = u, y; x != lca; x = st_[pa_[y]]) {
    flower_[b].push_back(x);
    flower_[b].push_back(y = st_[match_[x]]);
    q_push(y);
  }
  std::reverse(flower_[b].begin() + 1, flower_[b].end());
  for (int x = v, y; x != lca; x = st_[pa_[y]]) {
    flower_[b].push_back(x);
    flower_[b].push_back(y = st_[match_[x]]);
    q_push(y);
  }
  set_st(b, b);
  for (int x = 1; x <= n_x_; ++x) g_[b][x].w = g_[x][b].w = 0;
  for (int x = 1; x <= n_; ++x) flower_from_[b][x] = 0;
  for (int xs : flower_[b]) {
    for (int x = 1; x <= n_x_; ++x) {
      if (g_[b][x].w == 0 || e_delta(g_[xs][x]) < e_delta(g_[b][x])) {
        g_[b][x] = g_[xs][x];
        g_[x][b] = g_[x][xs];
      }
    }
    for (int x = 1; x <= n_; ++x) {
      if (flower_from_[xs][x]) flower_from_[b][x] = xs;
    }
  }
  set_slack(b);
}

void WeightedBlossom::expand_blossom(int b) {
  for (int p : flower_[b]) set_st(p, p);
  int xr = flower_from_[b][g_[b][pa_[b]].u];
  int pr = get_pr(b, xr);
  for (int i = 0; i < pr; i += 2) {
    int xs = flower_[b][i];
    int xns = flower_[b][i + 1];
    pa_[xs] = g_[xns][xs].u;
    s_[xs] = 1;
    s_[xns] = 0;
    slack_[xs] = 0;
    set_slack(xns);
    q_push(xns);
  }
  s_[xr] = 1;
  pa_[xr] = pa_[b];
  for (size_t i = static_cast<size_t>(pr) + 1; i < flower_[b].size(); ++i) {
    int xs = flower_[b][i];
    s_[xs] = -1;
    set_slack(xs);
  }
  st_[b] = 0;
}

bool WeightedBlossom::on_found_edge(const Edge& e) {
  int u = st_[e.u];
  int v = st_[e.v];
  if (s_[v] == -1) {
    pa_[v] = e.u;
    s_[v] = 1;
    int nu = st_[match_[v]];
    slack_[v] = slack_[nu] = 0;
    s_[nu] = 0;
    q_push(nu);
  } else if (s_[v] == 0) {
    int lca = get_lca(u, v);
    if (!lca) {
      augment(u, v);
      augment(v, u);
      return true;
    }
    add_blossom(u, lca, v);
  }
  return false;
}

bool WeightedBlossom::matching_round() {
  std::fill(s_.begin(), s_.end(), -1);
  std::fill(slack_.begin(), slack_.end(), 0);
  queue_.clear();
  queue_head_ = 0;
  for (int x = 1; x <= n_x_; ++x) {
    if (st_[x] == x && !match_[x]) {
      pa_[x] = 0;
      s_[x] = 0;
      q_push(x);
    }
  }
  if (queue_head_ == queue_.size()) return false;

  while (true) {
    while (queue_head_ < queue_.size()) {
      int u = queue_[queue_head_++];
      if (s_[st_[u]] == 1) continue;
      for (int v = 1; v <= n_; ++v) {
        if (g_[u][v].w > 0 && st_[u] != st_[v]) {
          if (e_delta(g_[u][v]) == 0) {
            if (on_found_edge(g_[u][v])) return true;
          } else {
            update_slack(u, st_[v]);
          }
        }
      }
    }

    long long d = kInf;
    for (int b = n_ + 1; b <= n_x_; ++b) {
      if (st_[b] == b && s_[b] == 1) d = std::min(d, lab_[b] / 2);
    }
    for (int x = 1; x <= n_x_; ++x) {
      if (st_[x] == x && slack_[x]) {
        if (s_[x] == -1)
          d = std::min(d, e_delta(g_[slack_[x]][x]));
        else if (s_[x] == 0)
          d = std::min(d, e_delta(g_[slack_[x]][x]) / 2);
      }
    }
    if (d == kInf) return false;

    // Outer vertices lower their duals; an exposed root hitting zero means
    // no augmenting path improves the matching.
    for (int x = 1; x <= n_; ++x) {
      if (s_[st_[x]] == 0) {
        if (lab_[x] <= d) return false;
        lab_[x] -= d;
      } else if (s_[st_[x]] == 1) {
        lab_[x] += d;
      }
    }
    for (int b = n_ + 1; b <= n_x_; ++b) {
      if (st_[b] == b) {
        if (s_[b] == 0)
          lab_[b] += d * 2;
        else if (s_[b] == 1)
          lab_[b] -= d * 2;
      }
    }

    queue_.clear();
    queue_head_ = 0;
    for (int x = 1; x <= n_x_; ++x) {
      if (st_[x] == x && slack_[x] && st_[slack_[x]] != x &&
          e_delta(g_[slack_[x]][x]) == 0) {
        if (on_found_edge(g_[slack_[x]][x])) return true;
      }
    }
    for (int b = n_ + 1; b <= n_x_; ++b) {
      if (st_[b] == b && s_[b] == 1 && lab_[b] == 0) expand_blossom(b);
    }
  }
}

std::pair<long long, int> WeightedBlossom::solve() {
  std::fill(match_.begin(), match_.end(), 0);
  n_x_ = n_;
  int n_matches = 0;
  long long total = 0;
  for (int u = 0; u <= n_; ++u) {
    st_[u] = u;
    flower_[u].clear();
  }
  long long w_max = 0;
  for (int u = 1; u <= n_; ++u) {
    for (int v = 1; v <= n_; ++v) {
      flower_from_[u][v] = (u == v ? u : 0);
      w_max = std::max(w_max, g_[u][v].w);
    }
  }
  for (int u = 1; u <= n_; ++u) lab_[u] = w_max;
  while (matching_round()) ++n_matches;
  for (int u = 1; u <= n_; ++u) {
    if (match_[u] && match_[u] < u) total += g_[u][match_[u]].w;
  }
  for (int u = 1; u <= n_; ++u) {
    if (!match_[u]) match_[u] = 0;  // mate() maps to -1
  }
  return {total, n_matches};
}

}  // namespace qlw
