#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "htc/util.hpp"

namespace htc {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Activations move through the network as (n, c*h*w) row-major matrices, one
// sample per row, channel-major within a row.
template <typename T>
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  Mat<T> data;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_), data(Mat<T>::Zero(n_, c_ * h_ * w_)) {}
  int features() const { return c * h * w; }
};

template <typename T>
struct ParamRef {
  std::string name;
  Mat<T>* value = nullptr;
  Mat<T>* grad = nullptr;
};

// Non-trainable buffer (batch-norm running statistics), tracked separately
// from ParamRef so the optimizer never touches it but persistence can.
template <typename T>
struct StateRef {
  std::string name;
  Mat<T>* value = nullptr;
};

// ceil-division output size with TensorFlow-style "same" padding
inline int same_out_size(int in, int stride) { return (in + stride - 1) / stride; }
inline int same_pad_begin(int in, int k, int stride) {
  int out = same_out_size(in, stride);
  int total = std::max((out - 1) * stride + k - in, 0);
  return total / 2;
}

template <typename T>
class Dense {
 public:
  Dense() = default;
  Dense(int in, int out, Rng& rng) : in_(in), out_(out) {
    w_.resize(in, out);
    T scale = std::sqrt(T(2) / T(in));
    for (int i = 0; i < in; ++i)
      for (int j = 0; j < out; ++j) w_(i, j) = T(rng.gaussian()) * scale;
    b_ = Mat<T>::Zero(1, out);
    dw_ = Mat<T>::Zero(in, out);
    db_ = Mat<T>::Zero(1, out);
  }

  Mat<T> forward(const Mat<T>& x) {
    if (x.cols() != in_) throw std::runtime_error("dense: input width mismatch");
    x_ = x;
    Mat<T> y = x * w_;
    y.rowwise() += b_.row(0);
    return y;
  }

  Mat<T> backward(const Mat<T>& dy) {
    dw_ += x_.transpose() * dy;
    db_.row(0) += dy.colwise().sum();
    return dy * w_.transpose();
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".w", &w_, &dw_}, {prefix + ".b", &b_, &db_}};
  }
  int64_t parameter_count() const { return int64_t(in_) * out_ + out_; }
  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  Mat<T>& weight() { return w_; }
  Mat<T>& bias() { return b_; }

 private:
  int in_ = 0, out_ = 0;
  Mat<T> w_, b_, dw_, db_;
  Mat<T> x_;
};

// 2-d convolution, square kernel, "same" ceil padding, im2col + GEMM.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  // A conv straight into a batch norm gets bias=false: the mean subtraction
  // cancels a bias exactly, leaving a parameter the loss cannot see.
  Conv2d(int in_ch, int out_ch, int k, int stride, Rng& rng, bool bias = true)
      : in_ch_(in_ch), out_ch_(out_ch), k_(k), stride_(stride), has_bias_(bias) {
    w_.resize(out_ch, in_ch * k * k);
    T scale = std::sqrt(T(2) / T(in_ch * k * k));
    for (Eigen::Index i = 0; i < w_.rows(); ++i)
      for (Eigen::Index j = 0; j < w_.cols(); ++j)
        w_(i, j) = T(rng.gaussian()) * scale;
    b_ = Mat<T>::Zero(1, out_ch);
    dw_ = Mat<T>::Zero(w_.rows(), w_.cols());
    db_ = Mat<T>::Zero(1, out_ch);
  }

  Tensor4<T> forward(const Tensor4<T>& x) {
    if (x.c != in_ch_) throw std::runtime_error("conv: channel mismatch");
    x_ = x;
    const int oh = same_out_size(x.h, stride_), ow = same_out_size(x.w, stride_);
    Tensor4<T> y(x.n, out_ch_, oh, ow);
    Mat<T> col(in_ch_ * k_ * k_, oh * ow);
    for (int r = 0; r < x.n; ++r) {
      im2col(x, r, col);
      Eigen::Map<Mat<T>> out(y.data.data() + Eigen::Index(r) * y.data.cols(),
                             out_ch_, oh * ow);
      out.noalias() = w_ * col;
      if (has_bias_) out.colwise() += b_.row(0).transpose();
    }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& dy) {
    const int oh = dy.h, ow = dy.w;
    Tensor4<T> dx(x_.n, x_.c, x_.h, x_.w);
    Mat<T> col(in_ch_ * k_ * k_, oh * ow);
    Mat<T> dcol(in_ch_ * k_ * k_, oh * ow);
    for (int r = 0; r < x_.n; ++r) {
      im2col(x_, r, col);
      Eigen::Map<const Mat<T>> g(dy.data.data() + Eigen::Index(r) * dy.data.cols(),
                                 out_ch_, oh * ow);
      dw_.noalias() += g * col.transpose();
      if (has_bias_) db_.row(0).transpose() += g.rowwise().sum();
      dcol.noalias() = w_.transpose() * g;
      col2im(dcol, r, dx);
    }
    return dx;
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    std::vector<ParamRef<T>> out{{prefix + ".w", &w_, &dw_}};
    if (has_bias_) out.push_back({prefix + ".b", &b_, &db_});
    return out;
  }
  int64_t parameter_count() const {
    return int64_t(out_ch_) * in_ch_ * k_ * k_ + (has_bias_ ? out_ch_ : 0);
  }
  int stride() const { return stride_; }
  Mat<T>& weight() { return w_; }
  Mat<T>& bias() { return b_; }

 private:
  void im2col(const Tensor4<T>& x, int r, Mat<T>& col) const {
    const int oh = same_out_size(x.h, stride_), ow = same_out_size(x.w, stride_);
    const int pt = same_pad_begin(x.h, k_, stride_);
    const int pl = same_pad_begin(x.w, k_, stride_);
    const T* src = x.data.data() + Eigen::Index(r) * x.data.cols();
    for (int c = 0; c < in_ch_; ++c)
      for (int kh = 0; kh < k_; ++kh)
        for (int kw = 0; kw < k_; ++kw) {
          const int row = (c * k_ + kh) * k_ + kw;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pt + kh;
            T* dst = col.data() + Eigen::Index(row) * col.cols() + Eigen::Index(oy) * ow;
            if (iy < 0 || iy >= x.h) {
              for (int ox = 0; ox < ow; ++ox) dst[ox] = T(0);
              continue;
            }
            const T* line = src + (Eigen::Index(c) * x.h + iy) * x.w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pl + kw;
              dst[ox] = (ix < 0 || ix >= x.w) ? T(0) : line[ix];
            }
          }
        }
  }

  void col2im(const Mat<T>& dcol, int r, Tensor4<T>& dx) const {
    const int oh = same_out_size(dx.h, stride_), ow = same_out_size(dx.w, stride_);
    const int pt = same_pad_begin(dx.h, k_, stride_);
    const int pl = same_pad_begin(dx.w, k_, stride_);
    T* dst = dx.data.data() + Eigen::Index(r) * dx.data.cols();
    for (int c = 0; c < in_ch_; ++c)
      for (int kh = 0; kh < k_; ++kh)
        for (int kw = 0; kw < k_; ++kw) {
          const int row = (c * k_ + kh) * k_ + kw;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pt + kh;
            if (iy < 0 || iy >= dx.h) continue;
            const T* g = dcol.data() + Eigen::Index(row) * dcol.cols() + Eigen::Index(oy) * ow;
            T* line = dst + (Eigen::Index(c) * dx.h + iy) * dx.w;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pl + kw;
              if (ix >= 0 && ix < dx.w) line[ix] += g[ox];
            }
          }
        }
  }

  int in_ch_ = 0, out_ch_ = 0, k_ = 0, stride_ = 1;
  bool has_bias_ = true;
  Mat<T> w_, b_, dw_, db_;
  Tensor4<T> x_;
};

// Per-channel batch normalization over (n, h, w). Batch statistics while
// training, running averages at inference.
template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(int ch) : ch_(ch) {
    gamma_ = Mat<T>::Ones(1, ch);
    beta_ = Mat<T>::Zero(1, ch);
    dgamma_ = Mat<T>::Zero(1, ch);
    dbeta_ = Mat<T>::Zero(1, ch);
    running_mean_ = Mat<T>::Zero(1, ch);
    running_var_ = Mat<T>::Ones(1, ch);
  }

  Tensor4<T> forward(const Tensor4<T>& x, bool training) {
    if (x.c != ch_) throw std::runtime_error("batchnorm: channel mismatch");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const int hw = x.h * x.w;
    if (training) {
      x_ = x;
      mean_.resize(1, ch_);
      inv_std_.resize(1, ch_);
      const T m = T(x.n) * T(hw);
      for (int c = 0; c < ch_; ++c) {
        T sum = 0, sq = 0;
        for (int r = 0; r < x.n; ++r) {
          const T* p = x.data.data() + Eigen::Index(r) * x.data.cols() + Eigen::Index(c) * hw;
          for (int i = 0; i < hw; ++i) {
            sum += p[i];
            sq += p[i] * p[i];
          }
        }
        T mu = sum / m;
        T var = sq / m - mu * mu;
        if (var < T(0)) var = T(0);
        mean_(0, c) = mu;
        inv_std_(0, c) = T(1) / std::sqrt(var + eps_);
        running_mean_(0, c) = momentum_ * running_mean_(0, c) + (T(1) - momentum_) * mu;
        running_var_(0, c) = momentum_ * running_var_(0, c) + (T(1) - momentum_) * var;
        const T g = gamma_(0, c), b = beta_(0, c), is = inv_std_(0, c);
        for (int r = 0; r < x.n; ++r) {
          const T* p = x.data.data() + Eigen::Index(r) * x.data.cols() + Eigen::Index(c) * hw;
          T* q = y.data.data() + Eigen::Index(r) * y.data.cols() + Eigen::Index(c) * hw;
          for (int i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * is + b;
        }
      }
    } else {
      for (int c = 0; c < ch_; ++c) {
        const T mu = running_mean_(0, c);
        const T is = T(1) / std::sqrt(running_var_(0, c) + eps_);
        const T g = gamma_(0, c), b = beta_(0, c);
        for (int r = 0; r < x.n; ++r) {
          const T* p = x.data.data() + Eigen::Index(r) * x.data.cols() + Eigen::Index(c) * hw;
          T* q = y.data.data() + Eigen::Index(r) * y.data.cols() + Eigen::Index(c) * hw;
          for (int i = 0; i < hw; ++i) q[i] = g * (p[i] - mu) * is + b;
        }
      }
    }
    return y;
  }

  Tensor4<T> backward(const Tensor4<T>& dy) {
    Tensor4<T> dx(x_.n, x_.c, x_.h, x_.w);
    const int hw = x_.h * x_.w;
    const T m = T(x_.n) * T(hw);
    for (int c = 0; c < ch_; ++c) {
      const T mu = mean_(0, c), is = inv_std_(0, c), g = gamma_(0, c);
      T sum_dy = 0, sum_dy_xhat = 0;
      for (int r = 0; r < x_.n; ++r) {
        const T* px = x_.data.data() + Eigen::Index(r) * x_.data.cols() + Eigen::Index(c) * hw;
        const T* pd = dy.data.data() + Eigen::Index(r) * dy.data.cols() + Eigen::Index(c) * hw;
        for (int i = 0; i < hw; ++i) {
          sum_dy += pd[i];
          sum_dy_xhat += pd[i] * (px[i] - mu) * is;
        }
      }
      dgamma_(0, c) += sum_dy_xhat;
      dbeta_(0, c) += sum_dy;
      for (int r = 0; r < x_.n; ++r) {
        const T* px = x_.data.data() + Eigen::Index(r) * x_.data.cols() + Eigen::Index(c) * hw;
        const T* pd = dy.data.data() + Eigen::Index(r) * dy.data.cols() + Eigen::Index(c) * hw;
        T* q = dx.data.data() + Eigen::Index(r) * dx.data.cols() + Eigen::Index(c) * hw;
        for (int i = 0; i < hw; ++i) {
          T xhat = (px[i] - mu) * is;
          q[i] = g * is / m * (m * pd[i] - sum_dy - xhat * sum_dy_xhat);
        }
      }
    }
    return dx;
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    return {{prefix + ".gamma", &gamma_, &dgamma_}, {prefix + ".beta", &beta_, &dbeta_}};
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    return {{prefix + ".running_mean", &running_mean_}, {prefix + ".running_var", &running_var_}};
  }
  int64_t parameter_count() const { return 2 * int64_t(ch_); }

 private:
  int ch_ = 0;
  T eps_ = T(1e-5);
  T momentum_ = T(0.9);
  Mat<T> gamma_, beta_, dgamma_, dbeta_;
  Mat<T> running_mean_, running_var_;
  Mat<T> mean_, inv_std_;
  Tensor4<T> x_;
};

template <typename T>
class Relu {
 public:
  Tensor4<T> forward(const Tensor4<T>& x) {
    y_ = x;
    y_.data = y_.data.cwiseMax(T(0));
    return y_;
  }
  Tensor4<T> backward(const Tensor4<T>& dy) {
    Tensor4<T> dx = dy;
    dx.data = ((y_.data.array() > T(0)).template cast<T>() * dy.data.array()).matrix();
    return dx;
  }

 private:
  Tensor4<T> y_;
};

template <typename T>
class GlobalAvgPool {
 public:
  Mat<T> forward(const Tensor4<T>& x) {
    n_ = x.n;
    c_ = x.c;
    hw_ = x.h * x.w;
    h_ = x.h;
    w_ = x.w;
    Mat<T> y(x.n, x.c);
    for (int r = 0; r < x.n; ++r)
      for (int c = 0; c < x.c; ++c) {
        const T* p = x.data.data() + Eigen::Index(r) * x.data.cols() + Eigen::Index(c) * hw_;
        T sum = 0;
        for (int i = 0; i < hw_; ++i) sum += p[i];
        y(r, c) = sum / T(hw_);
      }
    return y;
  }
  Tensor4<T> backward(const Mat<T>& dy) {
    Tensor4<T> dx(n_, c_, h_, w_);
    for (int r = 0; r < n_; ++r)
      for (int c = 0; c < c_; ++c) {
        T g = dy(r, c) / T(hw_);
        T* q = dx.data.data() + Eigen::Index(r) * dx.data.cols() + Eigen::Index(c) * hw_;
        for (int i = 0; i < hw_; ++i) q[i] = g;
      }
    return dx;
  }

 private:
  int n_ = 0, c_ = 0, hw_ = 0, h_ = 0, w_ = 0;
};

// Full pre-activation residual block: BN-relu-conv, BN-relu-conv, plus the
// skip path. When shape changes, a 1x1 strided projection runs on the
// pre-activated input; otherwise the identity is added.
template <typename T>
class ResidualBlock {
 public:
  ResidualBlock() = default;
  ResidualBlock(int in_ch, int out_ch, int stride, Rng& rng)
      : project_(in_ch != out_ch || stride != 1),
        bn1_(in_ch),
        conv1_(in_ch, out_ch, 3, stride, rng, false),
        bn2_(out_ch),
        conv2_(out_ch, out_ch, 3, 1, rng, false) {
    if (project_) proj_ = Conv2d<T>(in_ch, out_ch, 1, stride, rng, false);
  }

  Tensor4<T> forward(const Tensor4<T>& x, bool training) {
    identity_in_ = !project_;
    Tensor4<T> t = relu1_.forward(bn1_.forward(x, training));
    Tensor4<T> branch = conv1_.forward(t);
    branch = conv2_.forward(relu2_.forward(bn2_.forward(branch, training)));
    Tensor4<T> skip = project_ ? proj_.forward(t) : x;
    branch.data += skip.data;
    return branch;
  }

  Tensor4<T> backward(const Tensor4<T>& dy) {
    Tensor4<T> d_branch = bn2_.backward(relu2_.backward(conv2_.backward(dy)));
    Tensor4<T> dt = conv1_.backward(d_branch);
    if (project_) dt.data += proj_.backward(dy).data;
    Tensor4<T> dx = bn1_.backward(relu1_.backward(dt));
    if (identity_in_) dx.data += dy.data;
    return dx;
  }

  std::vector<ParamRef<T>> params(const std::string& prefix) {
    std::vector<ParamRef<T>> out;
    for (auto& p : bn1_.params(prefix + ".bn1")) out.push_back(p);
    for (auto& p : conv1_.params(prefix + ".conv1")) out.push_back(p);
    for (auto& p : bn2_.params(prefix + ".bn2")) out.push_back(p);
    for (auto& p : conv2_.params(prefix + ".conv2")) out.push_back(p);
    if (project_) for (auto& p : proj_.params(prefix + ".proj")) out.push_back(p);
    return out;
  }
  std::vector<StateRef<T>> state(const std::string& prefix) {
    std::vector<StateRef<T>> out;
    for (auto& s : bn1_.state(prefix + ".bn1")) out.push_back(s);
    for (auto& s : bn2_.state(prefix + ".bn2")) out.push_back(s);
    return out;
  }
  bool has_projection() const { return project_; }

 private:
  bool project_ = false;
  bool identity_in_ = false;
  BatchNorm2d<T> bn1_;
  Relu<T> relu1_;
  Conv2d<T> conv1_;
  BatchNorm2d<T> bn2_;
  Relu<T> relu2_;
  Conv2d<T> conv2_;
  Conv2d<T> proj_;
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;
  Mlp(int in_dim, int out_dim, uint64_t seed, int h1 = 512, int h2 = 128) {
    Rng rng(seed);
    fc1_ = Dense<T>(in_dim, h1, rng);
    fc2_ = Dense<T>(h1, h2, rng);
    fc3_ = Dense<T>(h2, out_dim, rng);
  }

  Mat<T> forward_logits(const Mat<T>& x, bool /*training*/ = false) {
    a1_ = fc1_.forward(x).cwiseMax(T(0));
    a2_ = fc2_.forward(a1_).cwiseMax(T(0));
    return fc3_.forward(a2_);
  }

  void backward(const Mat<T>& dlogits) {
    Mat<T> d2 = fc3_.backward(dlogits);
    d2 = ((a2_.array() > T(0)).template cast<T>() * d2.array()).matrix();
    Mat<T> d1 = fc2_.backward(d2);
    d1 = ((a1_.array() > T(0)).template cast<T>() * d1.array()).matrix();
    fc1_.backward(d1);
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& p : fc1_.params("fc1")) out.push_back(p);
    for (auto& p : fc2_.params("fc2")) out.push_back(p);
    for (auto& p : fc3_.params("fc3")) out.push_back(p);
    return out;
  }
  int64_t parameter_count() const {
    return fc1_.parameter_count() + fc2_.parameter_count() + fc3_.parameter_count();
  }
  int in_dim() const { return fc1_.in_dim(); }
  int out_dim() const { return fc3_.out_dim(); }

 private:
  Dense<T> fc1_, fc2_, fc3_;
  Mat<T> a1_, a2_;
};

struct ResCnnSpec {
  int in_side = 100;
  int stem_channels = 32;
  std::vector<int> stage_channels = {32, 64, 128, 256, 512};
  std::vector<int> stage_blocks = {1, 2, 2, 2, 2};
  std::vector<int> stage_strides = {1, 2, 2, 2, 2};
  int classes = 2;
  bool flatten_head = false;  // flatten 7x7xC into the dense layer instead of pooling
};

template <typename T>
class ResCnn {
 public:
  ResCnn() = default;
  ResCnn(const ResCnnSpec& spec, uint64_t seed) : spec_(spec) {
    if (spec.stage_channels.size() != spec.stage_blocks.size() ||
        spec.stage_channels.size() != spec.stage_strides.size())
      throw std::runtime_error("rescnn: stage lists disagree");
    Rng rng(seed);
    stem_ = Conv2d<T>(1, spec.stem_channels, 3, 1, rng, false);
    int side = spec.in_side;
    trace_.push_back(side);
    int ch = spec.stem_channels;
    for (size_t s = 0; s < spec.stage_channels.size(); ++s) {
      for (int b = 0; b < spec.stage_blocks[s]; ++b) {
        int stride = b == 0 ? spec.stage_strides[s] : 1;
        blocks_.emplace_back(ch, spec.stage_channels[s], stride, rng);
        ch = spec.stage_channels[s];
        side = same_out_size(side, stride);
      }
      trace_.push_back(side);
    }
    bn_final_ = BatchNorm2d<T>(ch);
    head_in_ = spec.flatten_head ? ch * side * side : ch;
    head_ = Dense<T>(head_in_, spec.classes, rng);
    final_side_ = side;
    final_ch_ = ch;
  }

  Mat<T> forward_logits(const Mat<T>& x, bool training = false) {
    if (x.cols() != Eigen::Index(spec_.in_side) * spec_.in_side)
      throw std::runtime_error("rescnn: input size mismatch");
    Tensor4<T> t(static_cast<int>(x.rows()), 1, spec_.in_side, spec_.in_side);
    t.data = x;
    t = stem_.forward(t);
    for (auto& block : blocks_) t = block.forward(t, training);
    t = relu_final_.forward(bn_final_.forward(t, training));
    if (spec_.flatten_head) return head_.forward(t.data);
    return head_.forward(pool_.forward(t));
  }

  void backward(const Mat<T>& dlogits) {
    Mat<T> dhead = head_.backward(dlogits);
    Tensor4<T> t;
    if (spec_.flatten_head) {
      t = Tensor4<T>(static_cast<int>(dhead.rows()), final_ch_, final_side_, final_side_);
      t.data = dhead;
    } else {
      t = pool_.backward(dhead);
    }
    t = bn_final_.backward(relu_final_.backward(t));
    for (size_t i = blocks_.size(); i-- > 0;) t = blocks_[i].backward(t);
    stem_.backward(t);
  }

  std::vector<ParamRef<T>> params() {
    std::vector<ParamRef<T>> out;
    for (auto& p : stem_.params("stem")) out.push_back(p);
    for (size_t i = 0; i < blocks_.size(); ++i)
      for (auto& p : blocks_[i].params("block" + std::to_string(i))) out.push_back(p);
    for (auto& p : bn_final_.params("bn_final")) out.push_back(p);
    for (auto& p : head_.params("head")) out.push_back(p);
    return out;
  }

  std::vector<StateRef<T>> state() {
    std::vector<StateRef<T>> out;
    for (size_t i = 0; i < blocks_.size(); ++i)
      for (auto& s : blocks_[i].state("block" + std::to_string(i))) out.push_back(s);
    for (auto& s : bn_final_.state("bn_final")) out.push_back(s);
    return out;
  }

  // spatial side after the stem and after each stage
  const std::vector<int>& spatial_trace() const { return trace_; }
  const ResCnnSpec& spec() const { return spec_; }
  size_t block_count() const { return blocks_.size(); }

 private:
  ResCnnSpec spec_;
  Conv2d<T> stem_;
  std::vector<ResidualBlock<T>> blocks_;
  BatchNorm2d<T> bn_final_;
  Relu<T> relu_final_;
  GlobalAvgPool<T> pool_;
  Dense<T> head_;
  std::vector<int> trace_;
  int head_in_ = 0, final_side_ = 0, final_ch_ = 0;
};

// Row-wise softmax.
template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> p = logits;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    T mx = p.row(r).maxCoeff();
    p.row(r) = (p.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

// Mean categorical cross-entropy with probability clipping; fills
// dlogits = (softmax - onehot) / n, the exact closed-form gradient.
template <typename T>
T softmax_ce_loss(const Mat<T>& logits, const std::vector<int>& y, T clip,
                  Mat<T>* dlogits = nullptr, Mat<T>* probs_out = nullptr) {
  if (static_cast<size_t>(logits.rows()) != y.size())
    throw std::runtime_error("loss: label count mismatch");
  Mat<T> p = softmax_rows(logits);
  T total = 0;
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    T py = p(r, y[static_cast<size_t>(r)]);
    py = std::min(std::max(py, clip), T(1) - clip);
    total -= std::log(py);
  }
  if (dlogits) {
    *dlogits = p / T(p.rows());
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      (*dlogits)(r, y[static_cast<size_t>(r)]) -= T(1) / T(p.rows());
  }
  if (probs_out) *probs_out = std::move(p);
  return total / T(p.rows());
}

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch = 32;
  int epochs = 10;
  uint64_t seed = 1;
  double clip = 1e-7;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<ParamRef<T>> params, const TrainConfig& cfg)
      : params_(std::move(params)), cfg_(cfg) {
    for (auto& p : params_) {
      m_.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
      v_.push_back(Mat<T>::Zero(p.value->rows(), p.value->cols()));
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.grad->setZero();
  }

  void step() {
    ++t_;
    const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
    const T corr1 = T(1) - std::pow(b1, T(t_));
    const T corr2 = T(1) - std::pow(b2, T(t_));
    const T lr = T(cfg_.lr), eps = T(cfg_.adam_eps);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& g = *params_[i].grad;
      m_[i] = b1 * m_[i] + (T(1) - b1) * g;
      v_[i] = (b2 * v_[i].array() + (T(1) - b2) * g.array().square()).matrix();
      params_[i].value->array() -=
          lr * (m_[i].array() / corr1) / ((v_[i].array() / corr2).sqrt() + eps);
    }
  }

 private:
  std::vector<ParamRef<T>> params_;
  TrainConfig cfg_;
  std::vector<Mat<T>> m_, v_;
  int64_t t_ = 0;
};

struct FitResult {
  std::vector<double> epoch_loss;
};

// Shared mini-batch loop. `forward` gets (batch rows, training=true) and
// returns logits; `backward` gets dlogits.
template <typename T, typename Forward, typename Backward>
FitResult train_loop(std::vector<ParamRef<T>> params, const Mat<T>& x,
                     const std::vector<int>& y, const TrainConfig& cfg,
                     Forward&& forward, Backward&& backward) {
  const size_t n = y.size();
  if (n == 0) throw std::runtime_error("train: empty dataset");
  if (static_cast<size_t>(x.rows()) != n)
    throw std::runtime_error("train: feature/label count mismatch");
  Adam<T> opt(params, cfg);
  Rng rng(cfg.seed);
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;

  FitResult result;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_sum = 0.0;
    for (size_t start = 0; start < n; start += static_cast<size_t>(cfg.batch)) {
      size_t count = std::min(static_cast<size_t>(cfg.batch), n - start);
      Mat<T> bx(count, x.cols());
      std::vector<int> by(count);
      for (size_t i = 0; i < count; ++i) {
        bx.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(order[start + i]));
        by[i] = y[order[start + i]];
      }
      opt.zero_grad();
      Mat<T> logits = forward(bx);
      Mat<T> dlogits;
      T loss = softmax_ce_loss(logits, by, T(cfg.clip), &dlogits);
      backward(dlogits);
      opt.step();
      epoch_sum += double(loss) * double(count);
    }
    double epoch_loss = epoch_sum / double(n);
    if (!std::isfinite(epoch_loss))
      throw std::runtime_error("train: loss diverged (epoch " +
                               std::to_string(epoch + 1) + ")");
    result.epoch_loss.push_back(epoch_loss);
  }
  return result;
}

template <typename T>
FitResult fit_mlp(Mlp<T>& model, const Mat<T>& x, const std::vector<int>& y,
                  const TrainConfig& cfg) {
  return train_loop<T>(
      model.params(), x, y, cfg,
      [&](const Mat<T>& bx) { return model.forward_logits(bx, true); },
      [&](const Mat<T>& dl) { model.backward(dl); });
}

template <typename T>
FitResult fit_rescnn(ResCnn<T>& model, const Mat<T>& x, const std::vector<int>& y,
                     const TrainConfig& cfg) {
  return train_loop<T>(
      model.params(), x, y, cfg,
      [&](const Mat<T>& bx) { return model.forward_logits(bx, true); },
      [&](const Mat<T>& dl) { model.backward(dl); });
}

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
};

// Central finite differences against already-populated analytic gradients.
// `loss` must re-run the forward pass with the current parameter values and
// must not touch the gradients.
template <typename T, typename LossFn>
GradCheckReport check_gradients(const std::vector<ParamRef<T>>& params, LossFn&& loss,
                                T h, size_t entries_per_param, Rng& rng) {
  GradCheckReport report;
  for (const auto& p : params) {
    Mat<T> analytic = *p.grad;
    const Eigen::Index total = p.value->size();
    size_t checks = std::min<size_t>(entries_per_param, static_cast<size_t>(total));
    for (size_t s = 0; s < checks; ++s) {
      Eigen::Index idx = entries_per_param >= static_cast<size_t>(total)
                             ? static_cast<Eigen::Index>(s)
                             : static_cast<Eigen::Index>(rng.index(static_cast<size_t>(total)));
      T saved = p.value->data()[idx];
      p.value->data()[idx] = saved + h;
      T up = loss();
      p.value->data()[idx] = saved - h;
      T down = loss();
      p.value->data()[idx] = saved;
      double numeric = (double(up) - double(down)) / (2.0 * double(h));
      double a = double(analytic.data()[idx]);
      double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
      double rel = std::abs(a - numeric) / denom;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_param = p.name;
      }
    }
  }
  return report;
}

}  // namespace htc
