#include "dac/gradcore/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "dac/common/error.hpp"

namespace dac::grad {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_string(t.shape()));
  }
}

struct ConvDims {
  std::size_t channels, height, width, kernel, out_h, out_w;
  ConvGeometry geometry;

  std::size_t patch() const { return channels * kernel * kernel; }
  std::size_t positions() const { return out_h * out_w; }
};

// Unfolds one image (C,H,W) into a (C*K*K, Ho*Wo) row-major matrix.
void im2col(const double* image, const ConvDims& d, double* cols) {
  const auto stride = static_cast<std::ptrdiff_t>(d.geometry.stride);
  const auto pad = static_cast<std::ptrdiff_t>(d.geometry.pad_begin);
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  for (std::size_t c = 0; c < d.channels; ++c) {
    const double* plane = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < d.kernel; ++ki) {
      for (std::size_t kj = 0; kj < d.kernel; ++kj) {
        double* row = cols + ((c * d.kernel + ki) * d.kernel + kj) * d.positions();
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(ki);
          double* out = row + oh * d.out_w;
          if (ih < 0 || ih >= H) {
            std::fill(out, out + d.out_w, 0.0);
            continue;
          }
          const double* in_row = plane + ih * W;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kj);
            out[ow] = (iw < 0 || iw >= W) ? 0.0 : in_row[iw];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back into the image gradient.
void col2im(const double* cols, const ConvDims& d, double* image) {
  const auto stride = static_cast<std::ptrdiff_t>(d.geometry.stride);
  const auto pad = static_cast<std::ptrdiff_t>(d.geometry.pad_begin);
  const auto H = static_cast<std::ptrdiff_t>(d.height);
  const auto W = static_cast<std::ptrdiff_t>(d.width);
  for (std::size_t c = 0; c < d.channels; ++c) {
    double* plane = image + c * d.height * d.width;
    for (std::size_t ki = 0; ki < d.kernel; ++ki) {
      for (std::size_t kj = 0; kj < d.kernel; ++kj) {
        const double* row = cols + ((c * d.kernel + ki) * d.kernel + kj) * d.positions();
        for (std::size_t oh = 0; oh < d.out_h; ++oh) {
          const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh) * stride - pad + static_cast<std::ptrdiff_t>(ki);
          if (ih < 0 || ih >= H) continue;
          double* out_row = plane + ih * W;
          const double* in = row + oh * d.out_w;
          for (std::size_t ow = 0; ow < d.out_w; ++ow) {
            const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow) * stride - pad + static_cast<std::ptrdiff_t>(kj);
            if (iw >= 0 && iw < W) out_row[iw] += in[ow];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) {
  const long padded = static_cast<long>(in) + g.pad_begin + g.pad_end;
  if (g.stride == 0) throw ValueError("conv2d: stride must be positive");
  if (kernel == 0 || padded < static_cast<long>(kernel)) {
    throw DimensionError("conv2d: kernel " + std::to_string(kernel) + " does not fit padded extent " +
                         std::to_string(padded));
  }
  return static_cast<std::size_t>(padded - static_cast<long>(kernel)) / g.stride + 1;
}

Var conv2d(Var input, Var weight, Var bias, const ConvGeometry& geometry) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 4, "conv2d input");
  require_rank(w, 4, "conv2d weight");
  if (w.dim(1) != x.dim(1)) {
    throw DimensionError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, input has " +
                         std::to_string(x.dim(1)));
  }
  if (w.dim(2) != w.dim(3)) throw DimensionError("conv2d: kernel must be square");
  const std::size_t batch = x.dim(0);
  const std::size_t out_ch = w.dim(0);
  if (bias.valid() && bias.shape() != Shape{out_ch}) {
    throw DimensionError("conv2d: bias shape " + shape_string(bias.shape()) + " does not match " +
                         std::to_string(out_ch) + " output channels");
  }
  ConvDims d{x.dim(1), x.dim(2), x.dim(3), w.dim(2), 0, 0, geometry};
  d.out_h = conv_output_extent(d.height, d.kernel, geometry);
  d.out_w = conv_output_extent(d.width, d.kernel, geometry);

  Tensor y({batch, out_ch, d.out_h, d.out_w});
  AlignedVector cols(d.patch() * d.positions());
  ConstMatrixMap wm(w.raw(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(d.patch()));
  ConstMatrixMap cm(cols.data(), static_cast<Eigen::Index>(d.patch()), static_cast<Eigen::Index>(d.positions()));
  const std::size_t in_stride = d.channels * d.height * d.width;
  const std::size_t out_stride = out_ch * d.positions();
  for (std::size_t n = 0; n < batch; ++n) {
    im2col(x.raw() + n * in_stride, d, cols.data());
    MatrixMap ym(y.raw() + n * out_stride, static_cast<Eigen::Index>(out_ch),
                 static_cast<Eigen::Index>(d.positions()));
    ym.noalias() = wm * cm;
    if (bias.valid()) {
      const Tensor& b = bias.value();
      for (std::size_t o = 0; o < out_ch; ++o) ym.row(static_cast<Eigen::Index>(o)).array() += b[o];
    }
  }

  std::vector<Var> inputs{input, weight};
  if (bias.valid()) inputs.push_back(bias);
  const std::size_t xi = input.id(), wi = weight.id();
  auto backward = [xi, wi, d, batch, out_ch](const Tape& tape, const Tensor& g, std::span<Tensor* const> grads) {
    const Tensor& x = tape.value(xi);
    const Tensor& w = tape.value(wi);
    Tensor* dx = grads[0];
    Tensor* dw = grads[1];
    Tensor* db = grads.size() > 2 ? grads[2] : nullptr;
    const auto P = static_cast<Eigen::Index>(d.positions());
    const auto KK = static_cast<Eigen::Index>(d.patch());
    const auto O = static_cast<Eigen::Index>(out_ch);
    AlignedVector cols(d.patch() * d.positions());
    ConstMatrixMap wm(w.raw(), O, KK);
    MatrixMap cm(cols.data(), KK, P);
    const std::size_t in_stride = d.channels * d.height * d.width;
    for (std::size_t n = 0; n < batch; ++n) {
      ConstMatrixMap gm(g.raw() + n * out_ch * d.positions(), O, P);
      if (db) {
        for (Eigen::Index o = 0; o < O; ++o) (*db)[static_cast<std::size_t>(o)] += gm.row(o).sum();
      }
      if (dw) {
        im2col(x.raw() + n * in_stride, d, cols.data());
        MatrixMap dwm(dw->raw(), O, KK);
        dwm.noalias() += gm * cm.transpose();
      }
      if (dx) {
        cm.noalias() = wm.transpose() * gm;
        col2im(cols.data(), d, dx->raw() + n * in_stride);
      }
    }
  };
  return input.tape().record(std::move(y), std::move(inputs), backward, "conv2d");
}

Var maxpool2d(Var input, std::size_t window, std::size_t stride) {
  const Tensor& x = input.value();
  require_rank(x, 4, "maxpool2d");
  if (window == 0 || stride == 0) throw ValueError("maxpool2d: window and stride must be positive");
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % stride != 0 || W % stride != 0 || H < window || W < window) {
    throw DimensionError("maxpool2d: extents " + shape_string(x.shape()) + " not divisible by stride " +
                         std::to_string(stride));
  }
  const std::size_t Ho = (H - window) / stride + 1, Wo = (W - window) / stride + 1;
  Tensor y({N, C, Ho, Wo});
  std::vector<std::size_t> switches(y.size());
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < N * C; ++plane) {
    const std::size_t base = plane * H * W;
    for (std::size_t oh = 0; oh < Ho; ++oh) {
      for (std::size_t ow = 0; ow < Wo; ++ow, ++o) {
        std::size_t best = base + oh * stride * W + ow * stride;
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) {
            const std::size_t idx = base + (oh * stride + i) * W + ow * stride + j;
            if (x[idx] > x[best]) best = idx;
          }
        }
        switches[o] = best;
        y[o] = x[best];
      }
    }
  }
  auto backward = [switches = std::move(switches)](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t k = 0; k < switches.size(); ++k) (*grads[0])[switches[k]] += g[k];
  };
  return input.tape().record(std::move(y), {input}, std::move(backward), "maxpool2d");
}

Var batchnorm2d(Var input, Var gamma, Var beta, const Tensor& running_mean, const Tensor& running_var,
                const BatchNormConfig& config, BatchNormUpdate* update) {
  const Tensor& x = input.value();
  require_rank(x, 4, "batchnorm2d");
  const std::size_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
  const Tensor& ga = gamma.value();
  const Tensor& be = beta.value();
  if (ga.shape() != Shape{C} || be.shape() != Shape{C}) {
    throw DimensionError("batchnorm2d: affine parameters must have shape (" + std::to_string(C) + ")");
  }
  const double count = static_cast<double>(N * HW);
  Tensor y(x.shape());
  Tensor xhat(x.shape());
  std::vector<double> inv_std(C);

  if (config.mode == Mode::Train) {
    if (N * HW < 2) throw DimensionError("batchnorm2d: train mode needs more than one value per channel");
    Tensor new_mean = running_mean.empty() ? Tensor({C}, 0.0) : running_mean;
    Tensor new_var = running_var.empty() ? Tensor({C}, 1.0) : running_var;
    for (std::size_t c = 0; c < C; ++c) {
      double mean = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = x.raw() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) mean += p[i];
      }
      mean /= count;
      double var = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const double* p = x.raw() + (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) var += (p[i] - mean) * (p[i] - mean);
      }
      var /= count;
      inv_std[c] = 1.0 / std::sqrt(var + config.eps);
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t off = (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          xhat[off + i] = (x[off + i] - mean) * inv_std[c];
          y[off + i] = ga[c] * xhat[off + i] + be[c];
        }
      }
      new_mean[c] = (1.0 - config.momentum) * new_mean[c] + config.momentum * mean;
      new_var[c] = (1.0 - config.momentum) * new_var[c] + config.momentum * var * count / (count - 1.0);
    }
    if (update) *update = {std::move(new_mean), std::move(new_var)};
  } else {
    if (running_mean.shape() != Shape{C} || running_var.shape() != Shape{C}) {
      throw ValueError("batchnorm2d: eval mode requires initialized running statistics for " +
                       std::to_string(C) + " channels");
    }
    for (std::size_t c = 0; c < C; ++c) {
      inv_std[c] = 1.0 / std::sqrt(running_var[c] + config.eps);
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t off = (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          xhat[off + i] = (x[off + i] - running_mean[c]) * inv_std[c];
          y[off + i] = ga[c] * xhat[off + i] + be[c];
        }
      }
    }
  }

  const bool train = config.mode == Mode::Train;
  const std::size_t gi = gamma.id();
  auto backward = [xhat = std::move(xhat), inv_std = std::move(inv_std), train, N, C, HW, count, gi](
                      const Tape& tape, const Tensor& g, std::span<Tensor* const> grads) {
    const Tensor& ga = tape.value(gi);
    Tensor* dx = grads[0];
    Tensor* dgamma = grads[1];
    Tensor* dbeta = grads[2];
    for (std::size_t c = 0; c < C; ++c) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t off = (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          sum_g += g[off + i];
          sum_gx += g[off + i] * xhat[off + i];
        }
      }
      if (dgamma) (*dgamma)[c] += sum_gx;
      if (dbeta) (*dbeta)[c] += sum_g;
      if (!dx) continue;
      const double k = ga[c] * inv_std[c];
      for (std::size_t n = 0; n < N; ++n) {
        const std::size_t off = (n * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) {
          if (train) {
            (*dx)[off + i] += k * (g[off + i] - sum_g / count - xhat[off + i] * sum_gx / count);
          } else {
            (*dx)[off + i] += k * g[off + i];
          }
        }
      }
    }
  };
  return input.tape().record(std::move(y), {input, gamma, beta}, std::move(backward), "batchnorm2d");
}

Var relu(Var input, ReluMode mode) {
  const Tensor& x = input.value();
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
  const std::size_t xi = input.id();
  auto backward = [xi, mode](const Tape& tape, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    const Tensor& x = tape.value(xi);
    Tensor& dx = *grads[0];
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] <= 0.0) continue;
      if (mode == ReluMode::Guided && g[i] <= 0.0) continue;
      dx[i] += g[i];
    }
  };
  return input.tape().record(std::move(y), {input}, backward, mode == ReluMode::Guided ? "relu_guided" : "relu");
}

Var relu_rescale(Var input, const Tensor& reference, double guard) {
  const Tensor& x = input.value();
  if (reference.shape() != x.shape()) {
    throw DimensionError("relu_rescale: reference " + shape_string(reference.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  Tensor y(x.shape());
  std::vector<double> multiplier(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    y[i] = x[i] > 0.0 ? x[i] : 0.0;
    const double dz = x[i] - reference[i];
    if (std::abs(dz) > guard) {
      multiplier[i] = (y[i] - std::max(reference[i], 0.0)) / dz;
    } else {
      multiplier[i] = x[i] > 0.0 ? 1.0 : 0.0;
    }
  }
  auto backward = [m = std::move(multiplier)](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t i = 0; i < m.size(); ++i) (*grads[0])[i] += m[i] * g[i];
  };
  return input.tape().record(std::move(y), {input}, std::move(backward), "relu_rescale");
}

Var linear(Var input, Var weight, Var bias) {
  const Tensor& x = input.value();
  const Tensor& w = weight.value();
  require_rank(x, 2, "linear input");
  require_rank(w, 2, "linear weight");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("linear: input width " + std::to_string(x.dim(1)) + " does not match weight " +
                         shape_string(w.shape()));
  }
  const auto N = static_cast<Eigen::Index>(x.dim(0));
  const auto D = static_cast<Eigen::Index>(w.dim(0));
  const auto M = static_cast<Eigen::Index>(w.dim(1));
  if (bias.valid() && bias.shape() != Shape{w.dim(1)}) {
    throw DimensionError("linear: bias shape " + shape_string(bias.shape()) + " does not match width " +
                         std::to_string(M));
  }
  Tensor y({x.dim(0), w.dim(1)});
  MatrixMap ym(y.raw(), N, M);
  ym.noalias() = ConstMatrixMap(x.raw(), N, D) * ConstMatrixMap(w.raw(), D, M);
  if (bias.valid()) {
    const Tensor& b = bias.value();
    for (Eigen::Index r = 0; r < N; ++r) {
      for (Eigen::Index c = 0; c < M; ++c) ym(r, c) += b[static_cast<std::size_t>(c)];
    }
  }
  std::vector<Var> inputs{input, weight};
  if (bias.valid()) inputs.push_back(bias);
  const std::size_t xi = input.id(), wi = weight.id();
  auto backward = [xi, wi, N, D, M](const Tape& tape, const Tensor& g, std::span<Tensor* const> grads) {
    ConstMatrixMap gm(g.raw(), N, M);
    if (grads[0]) {
      MatrixMap(grads[0]->raw(), N, D).noalias() += gm * ConstMatrixMap(tape.value(wi).raw(), D, M).transpose();
    }
    if (grads[1]) {
      MatrixMap(grads[1]->raw(), D, M).noalias() += ConstMatrixMap(tape.value(xi).raw(), N, D).transpose() * gm;
    }
    if (grads.size() > 2 && grads[2]) {
      for (Eigen::Index c = 0; c < M; ++c) (*grads[2])[static_cast<std::size_t>(c)] += gm.col(c).sum();
    }
  };
  return input.tape().record(std::move(y), std::move(inputs), backward, "linear");
}

Var flatten(Var input) {
  const Tensor& x = input.value();
  if (x.rank() < 2) throw DimensionError("flatten: needs a batch axis");
  const std::size_t n = x.dim(0);
  Tensor y = x.reshaped({n, x.size() / std::max<std::size_t>(n, 1)});
  auto backward = [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += g[i];
  };
  return input.tape().record(std::move(y), {input}, backward, "flatten");
}

Var add(Var a, Var b) {
  Tensor y = a.value() + b.value();
  auto backward = [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    for (Tensor* d : grads) {
      if (!d) continue;
      for (std::size_t i = 0; i < g.size(); ++i) (*d)[i] += g[i];
    }
  };
  return a.tape().record(std::move(y), {a, b}, backward, "add");
}

Var mul(Var a, Var b) {
  Tensor y = a.value() * b.value();
  const std::size_t ai = a.id(), bi = b.id();
  auto backward = [ai, bi](const Tape& tape, const Tensor& g, std::span<Tensor* const> grads) {
    const Tensor& av = tape.value(ai);
    const Tensor& bv = tape.value(bi);
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (grads[0]) (*grads[0])[i] += g[i] * bv[i];
      if (grads[1]) (*grads[1])[i] += g[i] * av[i];
    }
  };
  return a.tape().record(std::move(y), {a, b}, backward, "mul");
}

Var scale(Var a, double s) {
  Tensor y = a.value() * s;
  auto backward = [s](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t i = 0; i < g.size(); ++i) (*grads[0])[i] += s * g[i];
  };
  return a.tape().record(std::move(y), {a}, backward, "scale");
}

Var sum(Var a) {
  Tensor y = Tensor::scalar(dac::grad::sum(a.value()));
  auto backward = [](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (double& v : grads[0]->data()) v += g[0];
  };
  return a.tape().record(std::move(y), {a}, backward, "sum");
}

Var dropout(Var input, double p, Mode mode, std::mt19937_64* rng) {
  if (!(p >= 0.0 && p < 1.0)) throw ValueError("dropout: probability must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::Eval) return input;
  if (!rng) throw ValueError("dropout: train mode requires a random generator");
  const Tensor& x = input.value();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double keep_scale = 1.0 / (1.0 - p);
  std::vector<double> mask(x.size());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = uniform(*rng) >= p ? keep_scale : 0.0;
    y[i] = x[i] * mask[i];
  }
  auto backward = [mask = std::move(mask)](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t i = 0; i < mask.size(); ++i) (*grads[0])[i] += g[i] * mask[i];
  };
  return input.tape().record(std::move(y), {input}, std::move(backward), "dropout");
}

Var softmax(Var logits) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "softmax");
  const std::size_t N = z.dim(0), K = z.dim(1);
  Tensor p(z.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const double* row = z.raw() + n * K;
    const double mx = *std::max_element(row, row + K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += (p[n * K + k] = std::exp(row[k] - mx));
    for (std::size_t k = 0; k < K; ++k) p[n * K + k] /= total;
  }
  auto backward = [p, N, K](const Tape&, const Tensor& g, std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    for (std::size_t n = 0; n < N; ++n) {
      double dot = 0.0;
      for (std::size_t k = 0; k < K; ++k) dot += g[n * K + k] * p[n * K + k];
      for (std::size_t k = 0; k < K; ++k) (*grads[0])[n * K + k] += p[n * K + k] * (g[n * K + k] - dot);
    }
  };
  return logits.tape().record(std::move(p), {logits}, std::move(backward), "softmax");
}

Var cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  require_rank(z, 2, "cross_entropy");
  const std::size_t N = z.dim(0), K = z.dim(1);
  if (labels.size() != N) throw DimensionError("cross_entropy: label count does not match batch");
  Tensor probs(z.shape());
  double loss = 0.0;
  for (std::size_t n = 0; n < N; ++n) {
    if (labels[n] >= K) {
      throw ValueError("cross_entropy: label " + std::to_string(labels[n]) + " outside " + std::to_string(K) +
                       " classes");
    }
    const double* row = z.raw() + n * K;
    const double mx = *std::max_element(row, row + K);
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) total += std::exp(row[k] - mx);
    const double log_total = std::log(total) + mx;
    for (std::size_t k = 0; k < K; ++k) probs[n * K + k] = std::exp(row[k] - log_total);
    loss += log_total - row[labels[n]];
  }
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  auto backward = [probs = std::move(probs), owned = std::move(owned), N, K](const Tape&, const Tensor& g,
                                                                             std::span<Tensor* const> grads) {
    if (!grads[0]) return;
    const double s = g[0] / static_cast<double>(N);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t k = 0; k < K; ++k) {
        const double onehot = owned[n] == k ? 1.0 : 0.0;
        (*grads[0])[n * K + k] += s * (probs[n * K + k] - onehot);
      }
    }
  };
  return logits.tape().record(Tensor::scalar(loss / static_cast<double>(N)), {logits}, std::move(backward),
                              "cross_entropy");
}

}  // namespace dac::grad
