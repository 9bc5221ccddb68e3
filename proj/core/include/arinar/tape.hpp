#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace arinar {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff tape over dense double matrices. One tape is built
// per forward pass (one sequence); backward() walks it once in reverse.
// Not thread-safe; use one tape per thread.
class Tape {
 public:
  struct Ref {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  Ref constant(Mat v);  // leaf that accumulates no useful gradient
  Ref leaf(Mat v);      // parameter leaf; gradient readable after backward

  const Mat& val(Ref r) const { return nodes_[static_cast<std::size_t>(r.idx)].val; }
  const Mat& grad(Ref r) const {
    return nodes_[static_cast<std::size_t>(r.idx)].grad;
  }

  Ref add(Ref a, Ref b);                  // same shape
  Ref add_rowvec(Ref a, Ref row);         // row [1,n] broadcast over rows
  Ref mul_rowvec(Ref a, Ref row);         // broadcast elementwise multiply
  Ref add_scalar(Ref a, double s);
  Ref scale(Ref a, double s);
  Ref matmul(Ref a, Ref b);
  Ref gelu(Ref a);                        // exact erf-based GELU
  Ref layernorm(Ref a, double eps);       // per-row standardization, no affine
  Ref causal_attention(Ref q, Ref k, Ref v, int num_heads);
  Ref slice_cols(Ref a, int first, int count);
  Ref slice_rows(Ref a, int first, int count);
  Ref row(Ref a, int r);                  // single row as [1,n]
  Ref concat_rows(Ref top, Ref bottom);

  // Negative log-likelihood of scalar targets under per-row GMM heads.
  // raw is [T, 3K]: columns [0,K) weight logits, [K,2K) means, [2K,3K)
  // log-stds (clamped). Returns a [1,1] node holding the summed NLL.
  Ref gmm_nll(Ref raw, const Eigen::VectorXd& targets, int k);

  void backward(Ref loss);  // seeds d(loss)=1; loss must be [1,1]

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat val;
    Mat grad;
    std::function<void(Tape&)> back;  // null for leaves
  };

  Ref push(Mat v, std::function<void(Tape&)> back);
  Mat& grad_mut(Ref r) { return nodes_[static_cast<std::size_t>(r.idx)].grad; }

  std::vector<Node> nodes_;
};

}  // namespace arinar
