#include "arinar/tape.hpp"

#include <cmath>
#include <numbers>

#include "arinar/errors.hpp"
#include "arinar/gmm.hpp"

namespace arinar {

namespace {
constexpr double kLogSqrt2Pi = 0.9189385332046727;
}

Tape::Ref Tape::push(Mat v, std::function<void(Tape&)> back) {
  Node n;
  n.grad = Mat::Zero(v.rows(), v.cols());
  n.val = std::move(v);
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Ref{static_cast<int>(nodes_.size()) - 1};
}

Tape::Ref Tape::constant(Mat v) { return push(std::move(v), nullptr); }
Tape::Ref Tape::leaf(Mat v) { return push(std::move(v), nullptr); }

Tape::Ref Tape::add(Ref a, Ref b) {
  if (val(a).rows() != val(b).rows() || val(a).cols() != val(b).cols()) {
    throw ShapeError("tape add: shape mismatch");
  }
  Ref out = push(val(a) + val(b), nullptr);
  nodes_.back().back = [a, b, out](Tape& t) {
    t.grad_mut(a) += t.grad(out);
    t.grad_mut(b) += t.grad(out);
  };
  return out;
}

Tape::Ref Tape::add_rowvec(Ref a, Ref rowv) {
  if (val(rowv).rows() != 1 || val(rowv).cols() != val(a).cols()) {
    throw ShapeError("tape add_rowvec: need [1,n] row");
  }
  Mat v = val(a);
  v.rowwise() += val(rowv).row(0);
  Ref out = push(std::move(v), nullptr);
  nodes_.back().back = [a, rowv, out](Tape& t) {
    t.grad_mut(a) += t.grad(out);
    t.grad_mut(rowv).row(0) += t.grad(out).colwise().sum();
  };
  return out;
}

Tape::Ref Tape::mul_rowvec(Ref a, Ref rowv) {
  if (val(rowv).rows() != 1 || val(rowv).cols() != val(a).cols()) {
    throw ShapeError("tape mul_rowvec: need [1,n] row");
  }
  Mat v = val(a).array().rowwise() * val(rowv).row(0).array();
  Ref out = push(std::move(v), nullptr);
  nodes_.back().back = [a, rowv, out](Tape& t) {
    t.grad_mut(a).array() +=
        t.grad(out).array().rowwise() * t.val(rowv).row(0).array();
    t.grad_mut(rowv).row(0).array() +=
        (t.grad(out).array() * t.val(a).array()).colwise().sum();
  };
  return out;
}

Tape::Ref Tape::add_scalar(Ref a, double s) {
  Ref out = push(val(a).array() + s, nullptr);
  nodes_.back().back = [a, out](Tape& t) { t.grad_mut(a) += t.grad(out); };
  return out;
}

Tape::Ref Tape::scale(Ref a, double s) {
  Ref out = push(val(a) * s, nullptr);
  nodes_.back().back = [a, out, s](Tape& t) {
    t.grad_mut(a) += t.grad(out) * s;
  };
  return out;
}

Tape::Ref Tape::matmul(Ref a, Ref b) {
  if (val(a).cols() != val(b).rows()) {
    throw ShapeError("tape matmul: inner dimension mismatch");
  }
  Ref out = push(val(a) * val(b), nullptr);
  nodes_.back().back = [a, b, out](Tape& t) {
    t.grad_mut(a) += t.grad(out) * t.val(b).transpose();
    t.grad_mut(b) += t.val(a).transpose() * t.grad(out);
  };
  return out;
}

Tape::Ref Tape::gelu(Ref a) {
  const double inv_sqrt2 = 1.0 / std::numbers::sqrt2;
  Mat v = val(a).unaryExpr([inv_sqrt2](double x) {
    return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
  });
  Ref out = push(std::move(v), nullptr);
  nodes_.back().back = [a, out, inv_sqrt2](Tape& t) {
    const Mat& x = t.val(a);
    Mat d = x.unaryExpr([inv_sqrt2](double v) {
      const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
      const double pdf =
          std::exp(-0.5 * v * v) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + v * pdf;
    });
    t.grad_mut(a).array() += t.grad(out).array() * d.array();
  };
  return out;
}

Tape::Ref Tape::layernorm(Ref a, double eps) {
  const Mat& x = val(a);
  const auto rows = x.rows();
  Mat y(rows, x.cols());
  Eigen::VectorXd inv_std(rows);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    inv_std(r) = 1.0 / std::sqrt(var + eps);
    y.row(r) = (x.row(r).array() - mean) * inv_std(r);
  }
  Ref out = push(std::move(y), nullptr);
  nodes_.back().back = [a, out, inv_std](Tape& t) {
    const Mat& yv = t.val(out);
    const Mat& dy = t.grad(out);
    Mat& da = t.grad_mut(a);
    for (Eigen::Index r = 0; r < yv.rows(); ++r) {
      const double mean_dy = dy.row(r).mean();
      const double mean_dyy = (dy.row(r).array() * yv.row(r).array()).mean();
      da.row(r).array() += inv_std(r) * (dy.row(r).array() - mean_dy -
                                         yv.row(r).array() * mean_dyy);
    }
  };
  return out;
}

Tape::Ref Tape::causal_attention(Ref q, Ref k, Ref v, int num_heads) {
  const Mat& qv = val(q);
  const auto seq = qv.rows();
  const auto width = qv.cols();
  if (val(k).rows() != seq || val(v).rows() != seq || val(k).cols() != width ||
      val(v).cols() != width || width % num_heads != 0) {
    throw ShapeError("tape attention: inconsistent q/k/v shapes");
  }
  const auto hd = width / num_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(hd));

  Mat out_val(seq, width);
  std::vector<Mat> probs(static_cast<std::size_t>(num_heads));
  for (int h = 0; h < num_heads; ++h) {
    const auto c0 = h * hd;
    const Mat qh = qv.middleCols(c0, hd);
    const Mat kh = val(k).middleCols(c0, hd);
    Mat scores = qh * kh.transpose() * inv_scale;
    Mat& p = probs[static_cast<std::size_t>(h)];
    p = Mat::Zero(seq, seq);
    for (Eigen::Index i = 0; i < seq; ++i) {
      // causal mask: softmax over keys 0..i only
      const auto n = i + 1;
      const double m = scores.row(i).head(n).maxCoeff();
      Eigen::RowVectorXd e = (scores.row(i).head(n).array() - m).exp();
      p.row(i).head(n) = e / e.sum();
    }
    out_val.middleCols(c0, hd) = p * val(v).middleCols(c0, hd);
  }

  Ref out = push(std::move(out_val), nullptr);
  nodes_.back().back = [q, k, v, out, num_heads, hd, inv_scale,
                        probs = std::move(probs)](Tape& t) {
    const Mat& dy = t.grad(out);
    for (int h = 0; h < num_heads; ++h) {
      const auto c0 = h * hd;
      const Mat& p = probs[static_cast<std::size_t>(h)];
      const Mat dyh = dy.middleCols(c0, hd);
      const Mat vh = t.val(v).middleCols(c0, hd);
      const Mat qh = t.val(q).middleCols(c0, hd);
      const Mat kh = t.val(k).middleCols(c0, hd);

      t.grad_mut(v).middleCols(c0, hd) += p.transpose() * dyh;
      Mat dp = dyh * vh.transpose();
      // softmax backward rowwise; masked entries have p == 0
      Mat ds(p.rows(), p.cols());
      for (Eigen::Index i = 0; i < p.rows(); ++i) {
        const double dot = (dp.row(i).array() * p.row(i).array()).sum();
        ds.row(i) = p.row(i).array() * (dp.row(i).array() - dot);
      }
      t.grad_mut(q).middleCols(c0, hd) += ds * kh * inv_scale;
      t.grad_mut(k).middleCols(c0, hd) += ds.transpose() * qh * inv_scale;
    }
  };
  return out;
}

Tape::Ref Tape::slice_cols(Ref a, int first, int count) {
  Ref out = push(val(a).middleCols(first, count), nullptr);
  nodes_.back().back = [a, out, first, count](Tape& t) {
    t.grad_mut(a).middleCols(first, count) += t.grad(out);
  };
  return out;
}

Tape::Ref Tape::slice_rows(Ref a, int first, int count) {
  Ref out = push(val(a).middleRows(first, count), nullptr);
  nodes_.back().back = [a, out, first, count](Tape& t) {
    t.grad_mut(a).middleRows(first, count) += t.grad(out);
  };
  return out;
}

Tape::Ref Tape::row(Ref a, int r) { return slice_rows(a, r, 1); }

Tape::Ref Tape::concat_rows(Ref top, Ref bottom) {
  if (val(top).cols() != val(bottom).cols()) {
    throw ShapeError("tape concat_rows: column mismatch");
  }
  Mat v(val(top).rows() + val(bottom).rows(), val(top).cols());
  v.topRows(val(top).rows()) = val(top);
  v.bottomRows(val(bottom).rows()) = val(bottom);
  const auto nt = val(top).rows();
  Ref out = push(std::move(v), nullptr);
  nodes_.back().back = [top, bottom, out, nt](Tape& t) {
    t.grad_mut(top) += t.grad(out).topRows(nt);
    t.grad_mut(bottom) += t.grad(out).bottomRows(t.val(bottom).rows());
  };
  return out;
}

Tape::Ref Tape::gmm_nll(Ref raw, const Eigen::VectorXd& targets, int k) {
  const Mat& r = val(raw);
  const auto rows = r.rows();
  if (r.cols() != 3 * k || targets.size() != rows) {
    throw ShapeError("tape gmm_nll: raw must be [T,3K] with T targets");
  }

  // cached per-position quantities for the analytic backward
  Mat weights(rows, k), resp(rows, k), zscore(rows, k);
  Mat in_clamp(rows, k);
  double total = 0.0;
  for (Eigen::Index t = 0; t < rows; ++t) {
    const auto logits = r.row(t).head(k);
    const auto means = r.row(t).segment(k, k);
    const auto log_stds = r.row(t).tail(k);

    const double lmax = logits.maxCoeff();
    Eigen::RowVectorXd w = (logits.array() - lmax).exp();
    w /= w.sum();

    Eigen::RowVectorXd comp(k);
    for (int j = 0; j < k; ++j) {
      const double ls = std::clamp(log_stds(j), kLogStdMin, kLogStdMax);
      in_clamp(t, j) =
          (log_stds(j) > kLogStdMin && log_stds(j) < kLogStdMax) ? 1.0 : 0.0;
      const double sigma = std::exp(ls);
      const double z = (targets(t) - means(j)) / sigma;
      zscore(t, j) = z;
      comp(j) = std::log(w(j)) - ls - kLogSqrt2Pi - 0.5 * z * z;
    }
    const double cmax = comp.maxCoeff();
    Eigen::RowVectorXd e = (comp.array() - cmax).exp();
    const double lse = cmax + std::log(e.sum());
    resp.row(t) = e / e.sum();
    weights.row(t) = w;
    total -= lse;
  }

  Ref out = push(Mat::Constant(1, 1, total), nullptr);
  nodes_.back().back = [raw, out, k, weights = std::move(weights),
                        resp = std::move(resp), zscore = std::move(zscore),
                        in_clamp = std::move(in_clamp)](Tape& t) {
    const double g = t.grad(out)(0, 0);
    Mat& dr = t.grad_mut(raw);
    const Mat& rv = t.val(raw);
    for (Eigen::Index row = 0; row < rv.rows(); ++row) {
      for (int j = 0; j < k; ++j) {
        const double ls =
            std::clamp(rv(row, 2 * k + j), kLogStdMin, kLogStdMax);
        const double sigma = std::exp(ls);
        dr(row, j) += g * (weights(row, j) - resp(row, j));
        dr(row, k + j) += g * (-resp(row, j) * zscore(row, j) / sigma);
        dr(row, 2 * k + j) +=
            g * in_clamp(row, j) *
            (-resp(row, j) * (zscore(row, j) * zscore(row, j) - 1.0));
      }
    }
  };
  return out;
}

void Tape::backward(Ref loss) {
  if (val(loss).rows() != 1 || val(loss).cols() != 1) {
    throw ShapeError("tape backward: loss must be scalar");
  }
  grad_mut(loss)(0, 0) = 1.0;
  for (auto i = static_cast<std::ptrdiff_t>(nodes_.size()) - 1; i >= 0; --i) {
    auto& n = nodes_[static_cast<std::size_t>(i)];
    if (n.back) n.back(*this);
  }
}

}  // namespace arinar
