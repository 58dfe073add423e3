#include <cmath>

#include "milpevo/learn.hpp"

namespace milpevo {

int Tape::push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back) {
  nodes_.push_back(Node{std::move(value), Mat(), needs_grad, std::move(back)});
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::accumulate(int id, const Mat& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

int Tape::constant(Mat value) { return push(std::move(value), false, nullptr); }

int Tape::param(const Mat& value) { return push(value, true, nullptr); }

int Tape::matmul(int a, int b) {
  Mat v = value(a) * value(b);
  return push(std::move(v), ng(a) || ng(b), [a, b](Tape& t, const Mat& g) {
    if (t.ng(a)) t.accumulate(a, g * t.value(b).transpose());
    if (t.ng(b)) t.accumulate(b, t.value(a).transpose() * g);
  });
}

int Tape::matmul_nt(int a, int b) {
  Mat v = value(a) * value(b).transpose();
  return push(std::move(v), ng(a) || ng(b), [a, b](Tape& t, const Mat& g) {
    if (t.ng(a)) t.accumulate(a, g * t.value(b));
    if (t.ng(b)) t.accumulate(b, g.transpose() * t.value(a));
  });
}

int Tape::add(int a, int b) {
  Mat v = value(a) + value(b);
  return push(std::move(v), ng(a) || ng(b), [a, b](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

int Tape::add_row(int a, int bias) {
  Mat v = value(a);
  v.rowwise() += value(bias).row(0);
  return push(std::move(v), ng(a) || ng(bias), [a, bias](Tape& t, const Mat& g) {
    t.accumulate(a, g);
    if (t.ng(bias)) t.accumulate(bias, g.colwise().sum());
  });
}

int Tape::relu(int a) {
  Mat v = value(a).cwiseMax(0.0);
  return push(std::move(v), ng(a), [a](Tape& t, const Mat& g) {
    t.accumulate(a, (t.value(a).array() > 0.0).select(g, 0.0));
  });
}

int Tape::scale(int a, double s) {
  Mat v = value(a) * s;
  return push(std::move(v), ng(a), [a, s](Tape& t, const Mat& g) { t.accumulate(a, g * s); });
}

int Tape::mul_const(int a, Mat mask) {
  Mat v = value(a).cwiseProduct(mask);
  return push(std::move(v), ng(a), [a, mask = std::move(mask)](Tape& t, const Mat& g) {
    t.accumulate(a, g.cwiseProduct(mask));
  });
}

int Tape::layer_norm(int a, int gain, int shift, double eps) {
  const Mat& x = value(a);
  const Eigen::Index d = x.cols();
  Vec mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  Vec inv_std = ((centered.array().square().rowwise().sum() / static_cast<double>(d)) + eps)
                    .sqrt()
                    .inverse()
                    .matrix();
  Mat xhat = inv_std.asDiagonal() * centered;
  Mat v = xhat;
  v.array().rowwise() *= value(gain).row(0).array();
  v.rowwise() += value(shift).row(0);
  const bool need = ng(a) || ng(gain) || ng(shift);
  return push(std::move(v), need,
              [a, gain, shift, xhat = std::move(xhat), inv_std = std::move(inv_std)](
                  Tape& t, const Mat& g) {
                if (t.ng(gain)) t.accumulate(gain, (g.array() * xhat.array()).colwise().sum());
                if (t.ng(shift)) t.accumulate(shift, g.colwise().sum());
                if (t.ng(a)) {
                  Mat dxhat = g;
                  dxhat.array().rowwise() *= t.value(gain).row(0).array();
                  const double inv_d = 1.0 / static_cast<double>(dxhat.cols());
                  Vec m1 = dxhat.rowwise().sum() * inv_d;
                  Vec m2 = (dxhat.array() * xhat.array()).rowwise().sum().matrix() * inv_d;
                  Mat dx = dxhat;
                  dx.colwise() -= m1;
                  dx -= m2.asDiagonal() * xhat;
                  t.accumulate(a, inv_std.asDiagonal() * dx);
                }
              });
}

int Tape::spmm(std::shared_ptr<const Eigen::SparseMatrix<double>> s, int a) {
  Mat v = (*s) * value(a);
  return push(std::move(v), ng(a), [s, a](Tape& t, const Mat& g) {
    if (t.ng(a)) t.accumulate(a, s->transpose() * g);
  });
}

int Tape::gather_rows(int a, std::vector<int> rows) {
  const Mat& x = value(a);
  Mat v(static_cast<Eigen::Index>(rows.size()), x.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
  return push(std::move(v), ng(a), [a, rows = std::move(rows)](Tape& t, const Mat& g) {
    if (!t.ng(a)) return;
    Mat d = Mat::Zero(t.value(a).rows(), t.value(a).cols());
    for (std::size_t i = 0; i < rows.size(); ++i) d.row(rows[i]) += g.row(static_cast<Eigen::Index>(i));
    t.accumulate(a, d);
  });
}

int Tape::concat_rows(const std::vector<int>& parts) {
  Eigen::Index rows = 0;
  const Eigen::Index cols = value(parts.front()).cols();
  bool need = false;
  for (int p : parts) {
    if (value(p).cols() != cols) throw Error("shape", "concat_rows column mismatch");
    rows += value(p).rows();
    need = need || ng(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (int p : parts) {
    v.middleRows(at, value(p).rows()) = value(p);
    at += value(p).rows();
  }
  return push(std::move(v), need, [parts](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (int p : parts) {
      const Eigen::Index r = t.value(p).rows();
      if (t.ng(p)) t.accumulate(p, g.middleRows(at, r));
      at += r;
    }
  });
}

int Tape::concat_cols(const std::vector<int>& parts) {
  Eigen::Index cols = 0;
  const Eigen::Index rows = value(parts.front()).rows();
  bool need = false;
  for (int p : parts) {
    if (value(p).rows() != rows) throw Error("shape", "concat_cols row mismatch");
    cols += value(p).cols();
    need = need || ng(p);
  }
  Mat v(rows, cols);
  Eigen::Index at = 0;
  for (int p : parts) {
    v.middleCols(at, value(p).cols()) = value(p);
    at += value(p).cols();
  }
  return push(std::move(v), need, [parts](Tape& t, const Mat& g) {
    Eigen::Index at = 0;
    for (int p : parts) {
      const Eigen::Index c = t.value(p).cols();
      if (t.ng(p)) t.accumulate(p, g.middleCols(at, c));
      at += c;
    }
  });
}

int Tape::slice_cols(int a, int start, int count) {
  Mat v = value(a).middleCols(start, count);
  return push(std::move(v), ng(a), [a, start, count](Tape& t, const Mat& g) {
    if (!t.ng(a)) return;
    Mat d = Mat::Zero(t.value(a).rows(), t.value(a).cols());
    d.middleCols(start, count) = g;
    t.accumulate(a, d);
  });
}

int Tape::mean_rows(int a) {
  const Mat& x = value(a);
  if (x.rows() == 0) return constant(Mat::Zero(1, x.cols()));
  Mat v = x.colwise().mean();
  return push(std::move(v), ng(a), [a](Tape& t, const Mat& g) {
    const Eigen::Index n = t.value(a).rows();
    t.accumulate(a, g.replicate(n, 1) / static_cast<double>(n));
  });
}

int Tape::softmax_rows(int a) {
  const Mat& x = value(a);
  Mat v = (x.colwise() - x.rowwise().maxCoeff()).array().exp().matrix();
  v = v.array().colwise() / v.rowwise().sum().array();
  const int out = push(std::move(v), ng(a), nullptr);
  nodes_[out].back = [a, out](Tape& t, const Mat& g) {
    const Mat& y = t.value(out);
    Vec dot = (g.array() * y.array()).rowwise().sum();
    Mat d = g;
    d.colwise() -= dot;
    t.accumulate(a, d.cwiseProduct(y));
  };
  return out;
}

void Tape::backward(int out, const Mat& seed) {
  if (seed.rows() != value(out).rows() || seed.cols() != value(out).cols()) {
    throw Error("shape", "backward seed shape mismatch");
  }
  for (Node& n : nodes_) n.grad.resize(0, 0);
  accumulate(out, seed);
  for (int i = out; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.back || n.grad.size() == 0) continue;
    n.back(*this, n.grad);
  }
}

}  // namespace milpevo
