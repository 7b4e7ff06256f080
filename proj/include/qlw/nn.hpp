#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace qlw::nn {

struct Shape {
  std::array<int, 4> d{1, 1, 1, 1};
  int nd = 0;

  static Shape of(std::initializer_list<int> dims);
  int64_t numel() const;
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

struct Tensor {
  Shape shape;
  std::vector<double> v;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0)
      : shape(s), v(static_cast<size_t>(s.numel()), fill) {}

  double& operator[](size_t i) { return v[i]; }
  double operator[](size_t i) const { return v[i]; }
  size_t size() const { return v.size(); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Dynamic reverse-mode tape over dense double tensors. Every op allocates a
// node holding the value, a zero grad, and a backward closure; backward()
// walks the nodes in reverse creation order. Single-threaded by design so
// gradient accumulation order is deterministic.
class Tape {
 public:
  Var leaf(Tensor value);

  const Tensor& val(Var x) const { return nodes_[x.id].value; }
  Tensor& grad(Var x) { return nodes_[x.id].grad; }
  const Shape& shape(Var x) const { return nodes_[x.id].value.shape; }

  // out = a @ w, contracting the last axis of a with the first of w (K, N).
  Var matmul(Var a, Var w);
  Var add(Var a, Var b);             // same shape
  Var add_bias(Var a, Var bias);     // bias over the last axis
  Var mul(Var a, Var b);             // elementwise
  Var scale(Var a, double s);
  Var sigmoid(Var a);
  Var gelu(Var a);
  Var layer_norm(Var a, Var gamma, Var beta);  // over the last axis
  Var softmax_last(Var a);

  // Grouped matmuls over (G, M, K) tensors.
  Var bmm_nt(Var a, Var b);  // (G, M, K) x (G, N, K) -> (G, M, N)
  Var bmm_nn(Var a, Var b);  // (G, M, N) x (G, N, K) -> (G, M, K)

  // Bijective index permutation: out[i] = in[map[i]].
  Var permute(Var a, Shape out_shape, std::vector<int64_t> map);

  Var reshape(Var a, Shape out_shape);  // same element count, same order

  // Inverted dropout with an externally provided mask in {0, 1/(1-p)}.
  Var dropout_mask(Var a, std::vector<double> mask);

  // Sum of embedding rows: out[pos, :] = sum_t tables[t][index[t][pos], :],
  // where pos ranges over positions (out rows) and each table is (rows, D).
  Var embed_sum(const std::vector<Var>& tables,
                const std::vector<std::vector<int>>& indices, int positions);

  // x (B, S, N, D) convolved along S with kernel (K, D, Dout), zero padded.
  Var conv1d_time(Var x, Var kernel, Var bias);

  // Permutation-invariant sum over graph neighbors:
  // out[..., n, :] = sum_{m in nbrs[n]} x[..., m, :], with x (B, S, N, D).
  Var neighbor_sum(Var x, const std::vector<std::vector<int>>& nbrs);

  // logits (G, N, N) + table[g % H][bucket[u * N + v]] with H = table rows.
  Var add_dist_bias(Var logits, Var table, const std::vector<int>& bucket);

  // x (B, S, N, D) -> (B, N, D) selecting the last S slot.
  Var slice_last_time(Var x);
  // x (B, S, N, D) -> (B, s_count, n_count, D) taking leading slots/nodes.
  Var slice_sn(Var x, int s_count, int n_count);
  // x (B, N, D) -> (B, D), mean over nodes.
  Var mean_nodes(Var x);

  // Masked, weighted binary cross-entropy with logits, mean over kept
  // elements. targets/mask are flat and sized like logits; positives get
  // weight pos_weight. Returns a scalar Var; *kept_out gets the kept count.
  Var bce_with_logits(Var logits, const std::vector<double>& targets,
                      const std::vector<double>& mask, double pos_weight,
                      int64_t* kept_out = nullptr);

  void backward(Var loss_scalar);

  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;

  Var make(Tensor value, std::function<void(Tape&)> back);
};

double gelu_scalar(double x);
double gelu_grad_scalar(double x);

}  // namespace qlw::nn
