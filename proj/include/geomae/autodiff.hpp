#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace geomae::ad {

// Minimal reverse-mode engine over dense f64 matrices. A Graph is built per
// forward pass; node creation order is a topological order, so the backward
// pass is a single reverse sweep. Scalars are 1x1, row vectors 1xN.
using Id = int32_t;

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Differentiable leaf (model parameter); values are copied in.
  Id input(std::span<const double> v, int rows, int cols);
  // Non-differentiable data.
  Id constant(std::span<const double> v, int rows, int cols);
  Id zero_scalar();

  Id matmul(Id a, Id b);     // (m,k) x (k,n)
  Id matmul_nt(Id a, Id b);  // (m,k) x (n,k)^T -> (m,n)
  Id add(Id a, Id b);        // same shape
  Id add_rowvec(Id a, Id b); // (m,n) + broadcast (1,n)
  Id scale(Id a, double s);
  Id gelu(Id a);
  Id softmax_rows(Id a);
  Id layer_norm(Id a, Id gamma, Id beta, double eps = 1e-5);

  Id gather_rows(Id a, std::vector<int> idx);
  Id slice_rows(Id a, int r0, int r1);
  Id slice_cols(Id a, int c0, int c1);
  Id concat_rows(std::span<const Id> parts);
  Id concat_cols(Id a, Id b);
  Id broadcast_row(Id a, int rows);  // (1,n) -> (rows,n)

  // Per-segment max over contiguous row spans [start,end); ties keep the
  // first row. Gradient routes to the argmax rows.
  Id segment_max(Id a, std::vector<std::pair<int, int>> spans);
  // Expands one row per segment back to every row of that segment.
  Id segment_broadcast(Id a, std::vector<std::pair<int, int>> spans, int total_rows);

  // sum(mask * (pred - target)^2) / max(1, sum(mask)); mask entries are 0/1.
  Id mse_masked(Id pred, std::vector<double> target, std::vector<double> mask);
  // Like mse_masked but flips the sign of each row's target when that fits
  // better; row_mask enables whole rows.
  Id mse_masked_signflip(Id pred, std::vector<double> target, std::vector<double> row_mask);
  // Mean of the stable elementwise binary cross-entropy over sigmoid logits.
  Id bce_logits_mean(Id logits, std::vector<double> targets);

  void backward(Id root);  // root must be scalar; call once per graph

  int rows(Id n) const { return nodes_[n].rows; }
  int cols(Id n) const { return nodes_[n].cols; }
  std::span<const double> value(Id n) const { return nodes_[n].val; }
  std::span<const double> grad(Id n) const { return nodes_[n].grad; }
  double scalar(Id n) const { return nodes_[n].val[0]; }
  size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    int rows, cols;
    std::vector<double> val;
    std::vector<double> grad;
    bool needs_grad;
    std::function<void(Graph&)> back;  // empty for leaves/constants
  };

  Id make(int rows, int cols, bool needs_grad);
  Node& at(Id n) { return nodes_[n]; }

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace geomae::ad
