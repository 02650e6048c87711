#include "pda/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <memory>
#include <numbers>

#include "pda/error.hpp"

namespace pda::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMat>;
using MutMap = Eigen::Map<RowMat>;

ConstMap as_matrix(std::span<const double> data, std::size_t rows, std::size_t cols) {
    return ConstMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

MutMap as_matrix(std::span<double> data, std::size_t rows, std::size_t cols) {
    return MutMap(data.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}

bool tracking(std::initializer_list<const Tensor*> inputs) {
    if (!Tape::active()) return false;
    for (const Tensor* t : inputs) {
        if (t->defined() && t->requires_grad()) return true;
    }
    return false;
}

void check_finite(const char* op, const Tensor& out) {
    for (double v : out.data()) {
        if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite value in output");
    }
}

Tensor finish(const char* op, Tensor out, bool track, Tape::BackwardFn fn) {
    check_finite(op, out);
    if (track) {
        out.set_requires_grad(true);
        Tape::active()->record(op, out, std::move(fn));
    }
    return out;
}

// Captured handles are const copies; the gradient buffer lives in the shared
// storage, so a fresh handle can write it.
template <typename F>
void accumulate(const Tensor& t, F&& f) {
    if (!t.defined() || !t.requires_grad()) return;
    Tensor handle = t;
    f(handle.grad_buffer());
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

void require_rank(const char* op, const Tensor& x, std::size_t rank) {
    if (x.rank() != rank) {
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
    }
}

template <typename F>
Tensor map_unary(const Tensor& x, F&& f) {
    std::vector<double> out(x.numel());
    auto in = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
    return Tensor::from(x.shape(), std::move(out));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape("add", a, b);
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] + bd[i];
    count_flops(out.size());
    const bool track = tracking({&a, &b});
    return finish("add", Tensor::from(a.shape(), std::move(out)), track,
                  [a, b](std::span<const double> g) mutable {
                      accumulate(a, [&](std::span<double> ga) {
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      });
                      accumulate(b, [&](std::span<double> gb) {
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                      });
                  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape("sub", a, b);
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] - bd[i];
    count_flops(out.size());
    const bool track = tracking({&a, &b});
    return finish("sub", Tensor::from(a.shape(), std::move(out)), track,
                  [a, b](std::span<const double> g) mutable {
                      accumulate(a, [&](std::span<double> ga) {
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                      });
                      accumulate(b, [&](std::span<double> gb) {
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                      });
                  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    auto ad = a.data();
    auto bd = b.data();
    std::vector<double> out(ad.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = ad[i] * bd[i];
    count_flops(out.size());
    const bool track = tracking({&a, &b});
    return finish("mul", Tensor::from(a.shape(), std::move(out)), track,
                  [a, b](std::span<const double> g) mutable {
                      auto ad = a.data();
                      auto bd = b.data();
                      accumulate(a, [&](std::span<double> ga) {
                          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bd[i];
                      });
                      accumulate(b, [&](std::span<double> gb) {
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ad[i];
                      });
                  });
}

Tensor scale(const Tensor& x, double factor) {
    Tensor out = map_unary(x, [factor](double v) { return v * factor; });
    count_flops(out.numel());
    const bool track = tracking({&x});
    return finish("scale", std::move(out), track, [x, factor](std::span<const double> g) mutable {
        accumulate(x, [&](std::span<double> gx) {
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * factor;
        });
    });
}

Tensor add_scalar(const Tensor& x, double value) {
    Tensor out = map_unary(x, [value](double v) { return v + value; });
    count_flops(out.numel());
    const bool track = tracking({&x});
    return finish("add_scalar", std::move(out), track, [x](std::span<const double> g) mutable {
        accumulate(x, [&](std::span<double> gx) {
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    });
}

Tensor add_row_bias(const Tensor& x, const Tensor& bias) {
    require_rank("add_row_bias", x, 2);
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    if (bias.numel() != n) {
        throw ShapeError("add_row_bias: bias of " + shape_str(bias.shape()) + " for rows of " +
                         std::to_string(n));
    }
    auto xd = x.data();
    auto bd = bias.data();
    std::vector<double> out(xd.size());
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xd[r * n + c] + bd[c];
    }
    count_flops(out.size());
    const bool track = tracking({&x, &bias});
    return finish("add_row_bias", Tensor::from(x.shape(), std::move(out)), track,
                  [x, bias, m, n](std::span<const double> g) mutable {
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                      });
                      accumulate(bias, [&](std::span<double> gb) {
                          for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
                          }
                      });
                  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank("matmul", a, 2);
    require_rank("matmul", b, 2);
    const std::size_t m = a.dim(0);
    const std::size_t k = a.dim(1);
    const std::size_t n = b.dim(1);
    if (b.dim(0) != k) {
        throw ShapeError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros({m, n});
    as_matrix(out.mutable_data(), m, n).noalias() = as_matrix(a.data(), m, k) * as_matrix(b.data(), k, n);
    count_flops(static_cast<std::uint64_t>(m) * k * n);
    const bool track = tracking({&a, &b});
    return finish("matmul", std::move(out), track, [a, b, m, k, n](std::span<const double> g) mutable {
        auto gm = as_matrix(g, m, n);
        accumulate(a, [&](std::span<double> ga) {
            as_matrix(ga, m, k).noalias() += gm * as_matrix(b.data(), k, n).transpose();
        });
        accumulate(b, [&](std::span<double> gb) {
            as_matrix(gb, k, n).noalias() += as_matrix(a.data(), m, k).transpose() * gm;
        });
    });
}

Tensor transpose(const Tensor& x) {
    require_rank("transpose", x, 2);
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    Tensor out = Tensor::zeros({n, m});
    as_matrix(out.mutable_data(), n, m) = as_matrix(x.data(), m, n).transpose();
    const bool track = tracking({&x});
    return finish("transpose", std::move(out), track, [x, m, n](std::span<const double> g) mutable {
        accumulate(x, [&](std::span<double> gx) {
            as_matrix(gx, m, n) += as_matrix(g, n, m).transpose();
        });
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw ShapeError("reshape: " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    Tensor out = Tensor::from(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
    const bool track = tracking({&x});
    return finish("reshape", std::move(out), track, [x](std::span<const double> g) mutable {
        accumulate(x, [&](std::span<double> gx) {
            for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        });
    });
}

Tensor relu(const Tensor& x) {
    Tensor out = map_unary(x, [](double v) { return v > 0.0 ? v : 0.0; });
    const bool track = tracking({&x});
    return finish("relu", std::move(out), track, [x](std::span<const double> g) mutable {
        auto xd = x.data();
        accumulate(x, [&](std::span<double> gx) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xd[i] > 0.0) gx[i] += g[i];
            }
        });
    });
}

Tensor gelu(const Tensor& x) {
    Tensor out = map_unary(x, [](double v) { return 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0)); });
    count_flops(out.numel());
    const bool track = tracking({&x});
    return finish("gelu", std::move(out), track, [x](std::span<const double> g) mutable {
        auto xd = x.data();
        accumulate(x, [&](std::span<double> gx) {
            const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double v = xd[i];
                const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
                const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                gx[i] += g[i] * (cdf + v * pdf);
            }
        });
    });
}

Tensor abs(const Tensor& x) {
    Tensor out = map_unary(x, [](double v) { return std::fabs(v); });
    const bool track = tracking({&x});
    return finish("abs", std::move(out), track, [x](std::span<const double> g) mutable {
        auto xd = x.data();
        accumulate(x, [&](std::span<double> gx) {
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (xd[i] > 0.0) {
                    gx[i] += g[i];
                } else if (xd[i] < 0.0) {
                    gx[i] -= g[i];
                }
            }
        });
    });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    if (!(eps > 0.0)) throw ParameterError("layer_norm: eps must be positive");
    if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
    const std::size_t n = x.shape().back();
    if (gamma.numel() != n || beta.numel() != n) {
        throw ShapeError("layer_norm: gamma/beta must have " + std::to_string(n) + " entries");
    }
    const std::size_t rows = x.numel() / n;
    auto xd = x.data();
    auto gd = gamma.data();
    auto bd = beta.data();
    auto xhat = std::make_shared<std::vector<double>>(x.numel());
    auto rstd = std::make_shared<std::vector<double>>(rows);
    std::vector<double> out(x.numel());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* row = xd.data() + r * n;
        double mu = 0.0;
        for (std::size_t c = 0; c < n; ++c) mu += row[c];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t c = 0; c < n; ++c) var += (row[c] - mu) * (row[c] - mu);
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        (*rstd)[r] = inv;
        for (std::size_t c = 0; c < n; ++c) {
            const double h = (row[c] - mu) * inv;
            (*xhat)[r * n + c] = h;
            out[r * n + c] = h * gd[c] + bd[c];
        }
    }
    count_flops(4 * out.size());
    const bool track = tracking({&x, &gamma, &beta});
    return finish("layer_norm", Tensor::from(x.shape(), std::move(out)), track,
                  [x, gamma, beta, xhat, rstd, rows, n](std::span<const double> g) mutable {
                      auto gd = gamma.data();
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t r = 0; r < rows; ++r) {
                              double mean_dh = 0.0;
                              double mean_dh_h = 0.0;
                              for (std::size_t c = 0; c < n; ++c) {
                                  const double dh = g[r * n + c] * gd[c];
                                  mean_dh += dh;
                                  mean_dh_h += dh * (*xhat)[r * n + c];
                              }
                              mean_dh /= static_cast<double>(n);
                              mean_dh_h /= static_cast<double>(n);
                              for (std::size_t c = 0; c < n; ++c) {
                                  const double dh = g[r * n + c] * gd[c];
                                  gx[r * n + c] +=
                                      (*rstd)[r] * (dh - mean_dh - (*xhat)[r * n + c] * mean_dh_h);
                              }
                          }
                      });
                      accumulate(gamma, [&](std::span<double> gg) {
                          for (std::size_t i = 0; i < g.size(); ++i) gg[i % n] += g[i] * (*xhat)[i];
                      });
                      accumulate(beta, [&](std::span<double> gb) {
                          for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
                      });
                  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    if (axis >= x.rank()) throw ShapeError("softmax: axis out of range for " + shape_str(x.shape()));
    const auto& s = x.shape();
    std::size_t outer = 1;
    std::size_t inner = 1;
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
    const std::size_t n = s[axis];
    auto xd = x.data();
    std::vector<double> out(x.numel());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * n * inner + in;
            double mx = xd[base];
            for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xd[base + j * inner]);
            double total = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                const double e = std::exp(xd[base + j * inner] - mx);
                out[base + j * inner] = e;
                total += e;
            }
            for (std::size_t j = 0; j < n; ++j) out[base + j * inner] /= total;
        }
    }
    count_flops(3 * out.size());
    Tensor y = Tensor::from(x.shape(), std::move(out));
    const bool track = tracking({&x});
    Tensor y_saved = track ? y.detach() : Tensor();
    return finish("softmax", std::move(y), track,
                  [x, y_saved, outer, inner, n](std::span<const double> g) mutable {
                      auto yd = y_saved.data();
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t o = 0; o < outer; ++o) {
                              for (std::size_t in = 0; in < inner; ++in) {
                                  const std::size_t base = o * n * inner + in;
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < n; ++j) {
                                      dot += g[base + j * inner] * yd[base + j * inner];
                                  }
                                  for (std::size_t j = 0; j < n; ++j) {
                                      const std::size_t idx = base + j * inner;
                                      gx[idx] += yd[idx] * (g[idx] - dot);
                                  }
                              }
                          }
                      });
                  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank("slice_cols", x, 2);
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    if (start + count > n) throw ShapeError("slice_cols: range exceeds " + shape_str(x.shape()));
    auto xd = x.data();
    std::vector<double> out(m * count);
    for (std::size_t r = 0; r < m; ++r) {
        std::copy_n(xd.begin() + static_cast<std::ptrdiff_t>(r * n + start), count,
                    out.begin() + static_cast<std::ptrdiff_t>(r * count));
    }
    const bool track = tracking({&x});
    return finish("slice_cols", Tensor::from({m, count}, std::move(out)), track,
                  [x, m, n, start, count](std::span<const double> g) mutable {
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t r = 0; r < m; ++r) {
                              for (std::size_t c = 0; c < count; ++c) gx[r * n + start + c] += g[r * count + c];
                          }
                      });
                  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t m = parts.front().dim(0);
    std::size_t n = 0;
    for (const auto& p : parts) {
        require_rank("concat_cols", p, 2);
        if (p.dim(0) != m) throw ShapeError("concat_cols: row count mismatch");
        n += p.dim(1);
    }
    std::vector<double> out(m * n);
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t w = p.dim(1);
        auto pd = p.data();
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t c = 0; c < w; ++c) out[r * n + offset + c] = pd[r * w + c];
        }
        offset += w;
    }
    bool track = false;
    if (Tape::active()) {
        for (const auto& p : parts) track = track || p.requires_grad();
    }
    return finish("concat_cols", Tensor::from({m, n}, std::move(out)), track,
                  [parts, m, n](std::span<const double> g) mutable {
                      std::size_t offset = 0;
                      for (auto& p : parts) {
                          const std::size_t w = p.dim(1);
                          accumulate(p, [&](std::span<double> gp) {
                              for (std::size_t r = 0; r < m; ++r) {
                                  for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * n + offset + c];
                              }
                          });
                          offset += w;
                      }
                  });
}

Tensor slice_rows(const Tensor& x, std::size_t start, std::size_t count) {
    require_rank("slice_rows", x, 2);
    const std::size_t m = x.dim(0);
    const std::size_t n = x.dim(1);
    if (start + count > m) throw ShapeError("slice_rows: range exceeds " + shape_str(x.shape()));
    auto xd = x.data();
    std::vector<double> out(xd.begin() + static_cast<std::ptrdiff_t>(start * n),
                            xd.begin() + static_cast<std::ptrdiff_t>((start + count) * n));
    const bool track = tracking({&x});
    return finish("slice_rows", Tensor::from({count, n}, std::move(out)), track,
                  [x, n, start](std::span<const double> g) mutable {
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t i = 0; i < g.size(); ++i) gx[start * n + i] += g[i];
                      });
                  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t n = parts.front().dim(1);
    std::vector<double> out;
    std::size_t m = 0;
    for (const auto& p : parts) {
        require_rank("concat_rows", p, 2);
        if (p.dim(1) != n) throw ShapeError("concat_rows: column count mismatch");
        out.insert(out.end(), p.data().begin(), p.data().end());
        m += p.dim(0);
    }
    bool track = false;
    if (Tape::active()) {
        for (const auto& p : parts) track = track || p.requires_grad();
    }
    return finish("concat_rows", Tensor::from({m, n}, std::move(out)), track,
                  [parts](std::span<const double> g) mutable {
                      std::size_t offset = 0;
                      for (auto& p : parts) {
                          const std::size_t len = p.numel();
                          accumulate(p, [&](std::span<double> gp) {
                              for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
                          });
                          offset += len;
                      }
                  });
}

Tensor crop(const Tensor& x, std::size_t row, std::size_t rows, std::size_t col, std::size_t cols) {
    require_rank("crop", x, 3);
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    if (row + rows > h || col + cols > w) throw ShapeError("crop: window exceeds " + shape_str(x.shape()));
    auto xd = x.data();
    std::vector<double> out(c * rows * cols);
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t q = 0; q < cols; ++q) {
                out[(ch * rows + r) * cols + q] = xd[(ch * h + row + r) * w + col + q];
            }
        }
    }
    const bool track = tracking({&x});
    return finish("crop", Tensor::from({c, rows, cols}, std::move(out)), track,
                  [x, c, h, w, row, rows, col, cols](std::span<const double> g) mutable {
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t ch = 0; ch < c; ++ch) {
                              for (std::size_t r = 0; r < rows; ++r) {
                                  for (std::size_t q = 0; q < cols; ++q) {
                                      gx[(ch * h + row + r) * w + col + q] += g[(ch * rows + r) * cols + q];
                                  }
                              }
                          }
                      });
                  });
}

namespace {

struct ConvGeometry {
    std::size_t channels, height, width;
    std::size_t out_channels, kh, kw;
    std::size_t stride, pad;
    std::size_t out_h, out_w;

    std::size_t patch() const { return channels * kh * kw; }
    std::size_t pixels() const { return out_h * out_w; }
    bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

// cols[(c*kh + i)*kw + j, oy*out_w + ox] = x[c, oy*stride + i - pad, ox*stride + j - pad]
void im2col(const ConvGeometry& g, std::span<const double> x, std::vector<double>& cols) {
    cols.assign(g.patch() * g.pixels(), 0.0);
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                double* dst = cols.data() + ((c * g.kh + i) * g.kw + j) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    const double* src = x.data() + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        dst[oy * g.out_w + ox] = src[xx];
                    }
                }
            }
        }
    }
}

void col2im(const ConvGeometry& g, std::span<const double> cols, std::span<double> dx) {
    for (std::size_t c = 0; c < g.channels; ++c) {
        for (std::size_t i = 0; i < g.kh; ++i) {
            for (std::size_t j = 0; j < g.kw; ++j) {
                const double* src = cols.data() + ((c * g.kh + i) * g.kw + j) * g.pixels();
                for (std::size_t oy = 0; oy < g.out_h; ++oy) {
                    const std::ptrdiff_t y = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                             static_cast<std::ptrdiff_t>(g.pad);
                    if (y < 0 || y >= static_cast<std::ptrdiff_t>(g.height)) continue;
                    double* dst = dx.data() + (c * g.height + static_cast<std::size_t>(y)) * g.width;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const std::ptrdiff_t xx = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                                  static_cast<std::ptrdiff_t>(g.pad);
                        if (xx < 0 || xx >= static_cast<std::ptrdiff_t>(g.width)) continue;
                        dst[xx] += src[oy * g.out_w + ox];
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions options) {
    require_rank("conv2d", x, 3);
    require_rank("conv2d", weight, 4);
    ConvGeometry g{};
    g.channels = x.dim(0);
    g.height = x.dim(1);
    g.width = x.dim(2);
    g.out_channels = weight.dim(0);
    g.kh = weight.dim(2);
    g.kw = weight.dim(3);
    if (weight.dim(1) != g.channels) {
        throw ShapeError("conv2d: weight " + shape_str(weight.shape()) + " for input " + shape_str(x.shape()));
    }
    if (options.stride == 0) throw ParameterError("conv2d: stride must be positive");
    if (!options.padding && (g.kh % 2 == 0 || g.kw % 2 == 0)) {
        throw ShapeError("conv2d: even kernel requires explicit padding");
    }
    g.stride = options.stride;
    g.pad = options.padding.value_or((g.kh - 1) / 2);
    const std::size_t span_h = g.height + 2 * g.pad;
    const std::size_t span_w = g.width + 2 * g.pad;
    if (span_h < g.kh || span_w < g.kw || (span_h - g.kh) % g.stride != 0 || (span_w - g.kw) % g.stride != 0) {
        throw ShapeError("conv2d: non-integral output extent for input " + shape_str(x.shape()) +
                         " kernel " + shape_str(weight.shape()) + " stride " + std::to_string(g.stride));
    }
    g.out_h = (span_h - g.kh) / g.stride + 1;
    g.out_w = (span_w - g.kw) / g.stride + 1;
    if (bias.defined() && bias.numel() != g.out_channels) throw ShapeError("conv2d: bias size mismatch");

    auto cols = std::make_shared<std::vector<double>>();
    std::span<const double> col_view;
    if (g.pointwise()) {
        col_view = x.data();
    } else {
        im2col(g, x.data(), *cols);
        col_view = *cols;
    }
    Tensor out = Tensor::zeros({g.out_channels, g.out_h, g.out_w});
    auto om = as_matrix(out.mutable_data(), g.out_channels, g.pixels());
    om.noalias() = as_matrix(weight.data(), g.out_channels, g.patch()) * as_matrix(col_view, g.patch(), g.pixels());
    if (bias.defined()) {
        auto bd = bias.data();
        for (std::size_t o = 0; o < g.out_channels; ++o) om.row(static_cast<Eigen::Index>(o)).array() += bd[o];
    }
    count_flops(static_cast<std::uint64_t>(g.out_channels) * g.patch() * g.pixels());
    const bool track = tracking({&x, &weight, &bias});
    if (!track) cols.reset();
    return finish("conv2d", std::move(out), track, [x, weight, bias, cols, g](std::span<const double> grad) mutable {
        auto gm = as_matrix(grad, g.out_channels, g.pixels());
        std::span<const double> col_view = g.pointwise() ? x.data() : std::span<const double>(*cols);
        accumulate(weight, [&](std::span<double> gw) {
            as_matrix(gw, g.out_channels, g.patch()).noalias() +=
                gm * as_matrix(col_view, g.patch(), g.pixels()).transpose();
        });
        accumulate(bias, [&](std::span<double> gb) {
            for (std::size_t o = 0; o < g.out_channels; ++o) gb[o] += gm.row(static_cast<Eigen::Index>(o)).sum();
        });
        accumulate(x, [&](std::span<double> gx) {
            if (g.pointwise()) {
                as_matrix(gx, g.patch(), g.pixels()).noalias() +=
                    as_matrix(weight.data(), g.out_channels, g.patch()).transpose() * gm;
                return;
            }
            std::vector<double> dcols(g.patch() * g.pixels());
            as_matrix(std::span<double>(dcols), g.patch(), g.pixels()).noalias() =
                as_matrix(weight.data(), g.out_channels, g.patch()).transpose() * gm;
            col2im(g, dcols, gx);
        });
    });
}

std::vector<ResizeTap> resize_taps(std::size_t in_size, std::size_t out_size) {
    std::vector<ResizeTap> taps(out_size);
    const double ratio = static_cast<double>(in_size) / static_cast<double>(out_size);
    for (std::size_t i = 0; i < out_size; ++i) {
        double src = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(in_size - 1));
        auto lo = static_cast<std::size_t>(std::floor(src));
        lo = std::min(lo, in_size - 1);
        taps[i].lo = lo;
        taps[i].hi = std::min(lo + 1, in_size - 1);
        taps[i].frac = src - static_cast<double>(lo);
    }
    return taps;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_height, std::size_t out_width) {
    require_rank("bilinear_resize", x, 3);
    if (out_height == 0 || out_width == 0) throw ShapeError("bilinear_resize: target extent must be >= 1");
    const std::size_t c = x.dim(0);
    const std::size_t h = x.dim(1);
    const std::size_t w = x.dim(2);
    if (h == 0 || w == 0) throw ShapeError("bilinear_resize: empty input");
    auto ty = resize_taps(h, out_height);
    auto tx = resize_taps(w, out_width);
    auto xd = x.data();
    std::vector<double> out(c * out_height * out_width);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* plane = xd.data() + ch * h * w;
        for (std::size_t i = 0; i < out_height; ++i) {
            const auto& a = ty[i];
            for (std::size_t j = 0; j < out_width; ++j) {
                const auto& b = tx[j];
                const double top = (1.0 - b.frac) * plane[a.lo * w + b.lo] + b.frac * plane[a.lo * w + b.hi];
                const double bot = (1.0 - b.frac) * plane[a.hi * w + b.lo] + b.frac * plane[a.hi * w + b.hi];
                out[(ch * out_height + i) * out_width + j] = (1.0 - a.frac) * top + a.frac * bot;
            }
        }
    }
    count_flops(4 * out.size());
    const bool track = tracking({&x});
    return finish("bilinear_resize", Tensor::from({c, out_height, out_width}, std::move(out)), track,
                  [x, ty, tx, c, h, w, out_height, out_width](std::span<const double> g) mutable {
                      accumulate(x, [&](std::span<double> gx) {
                          for (std::size_t ch = 0; ch < c; ++ch) {
                              double* plane = gx.data() + ch * h * w;
                              for (std::size_t i = 0; i < out_height; ++i) {
                                  const auto& a = ty[i];
                                  for (std::size_t j = 0; j < out_width; ++j) {
                                      const auto& b = tx[j];
                                      const double v = g[(ch * out_height + i) * out_width + j];
                                      plane[a.lo * w + b.lo] += v * (1.0 - a.frac) * (1.0 - b.frac);
                                      plane[a.lo * w + b.hi] += v * (1.0 - a.frac) * b.frac;
                                      plane[a.hi * w + b.lo] += v * a.frac * (1.0 - b.frac);
                                      plane[a.hi * w + b.hi] += v * a.frac * b.frac;
                                  }
                              }
                          }
                      });
                  });
}

Tensor sum(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    count_flops(x.numel());
    const bool track = tracking({&x});
    return finish("sum", Tensor::scalar(total), track, [x](std::span<const double> g) mutable {
        accumulate(x, [&](std::span<double> gx) {
            for (double& v : gx) v += g[0];
        });
    });
}

Tensor mean(const Tensor& x) {
    if (x.numel() == 0) throw ShapeError("mean of an empty tensor");
    return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

}  // namespace pda::ops
