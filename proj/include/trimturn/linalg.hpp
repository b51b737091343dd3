#pragma once

// Small dense linear algebra: vectors, row-major matrices, LU with partial
// pivoting, Cholesky, and real nonsymmetric eigenvalues (Hessenberg reduction
// followed by Francis double-shift QR).

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "trimturn/error.hpp"

namespace trimturn {

using Vec = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::initializer_list<std::initializer_list<double>> init) {
    rows_ = init.size();
    cols_ = rows_ ? init.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& row : init) {
      if (row.size() != cols_) fail(ErrorKind::ShapeMismatch, "ragged matrix initializer");
      data_.insert(data_.end(), row.begin(), row.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  Vec column(std::size_t j) const {
    Vec c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }
  void set_column(std::size_t j, std::span<const double> c) {
    for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = c[i];
  }

  const std::vector<double>& data() const noexcept { return data_; }
  std::vector<double>& data() noexcept { return data_; }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  /// Induced infinity norm (max absolute row sum).
  double norm_inf() const {
    double m = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) {
      double s = 0.0;
      for (double v : row(i)) s += std::abs(v);
      m = std::max(m, s);
    }
    return m;
  }

  double norm_fro() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- vector helpers -------------------------------------------------------

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double norm_inf(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline Vec operator+(const Vec& a, const Vec& b) {
  Vec r(a);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] += b[i];
  return r;
}

inline Vec operator-(const Vec& a, const Vec& b) {
  Vec r(a);
  for (std::size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  return r;
}

inline Vec operator*(double s, const Vec& a) {
  Vec r(a);
  for (double& x : r) x *= s;
  return r;
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

inline Vec concat(std::initializer_list<std::span<const double>> parts) {
  Vec out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

// ---- matrix products ------------------------------------------------------

inline Vec operator*(const Matrix& a, std::span<const double> x) {
  if (a.cols() != x.size()) fail(ErrorKind::ShapeMismatch, "matrix-vector size mismatch");
  Vec y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i), x);
  return y;
}

inline Vec operator*(const Matrix& a, const Vec& x) { return a * std::span<const double>(x); }

/// Aᵀx without forming the transpose.
inline Vec transpose_times(const Matrix& a, std::span<const double> x) {
  if (a.rows() != x.size()) fail(ErrorKind::ShapeMismatch, "transpose-vector size mismatch");
  Vec y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) axpy(x[i], a.row(i), y);
  return y;
}

inline Matrix operator*(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorKind::ShapeMismatch, "matrix-matrix size mismatch");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

inline Matrix operator-(const Matrix& a, const Matrix& b) {
  Matrix c(a);
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] -= b.data()[i];
  return c;
}

inline Matrix operator+(const Matrix& a, const Matrix& b) {
  Matrix c(a);
  for (std::size_t i = 0; i < c.data().size(); ++i) c.data()[i] += b.data()[i];
  return c;
}

// ---- LU -------------------------------------------------------------------

/// PA = LU with partial pivoting; unit lower factor stored below the diagonal.
class LuDecomposition {
 public:
  explicit LuDecomposition(Matrix a) : lu_(std::move(a)), perm_(lu_.rows()) {
    if (!lu_.square()) fail(ErrorKind::ShapeMismatch, "LU of a non-square matrix");
    const std::size_t n = lu_.rows();
    const double threshold = 1e-14 * lu_.max_abs();
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t piv = k;
      double best = std::abs(lu_(k, k));
      for (std::size_t i = k + 1; i < n; ++i) {
        if (std::abs(lu_(i, k)) > best) {
          best = std::abs(lu_(i, k));
          piv = i;
        }
      }
      if (!(best > threshold)) {
        fail(ErrorKind::SingularMatrix, "pivot " + std::to_string(best) + " in column " + std::to_string(k));
      }
      if (piv != k) {
        std::swap_ranges(lu_.row(k).begin(), lu_.row(k).end(), lu_.row(piv).begin());
        std::swap(perm_[k], perm_[piv]);
      }
      const double inv = 1.0 / lu_(k, k);
      for (std::size_t i = k + 1; i < n; ++i) {
        double& l = lu_(i, k);
        if (l == 0.0) continue;
        l *= inv;
        for (std::size_t j = k + 1; j < n; ++j) lu_(i, j) -= l * lu_(k, j);
      }
    }
  }

  std::size_t size() const noexcept { return lu_.rows(); }

  Vec solve(std::span<const double> b) const {
    const std::size_t n = lu_.rows();
    if (b.size() != n) fail(ErrorKind::ShapeMismatch, "LU solve right-hand side");
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = b[perm_[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= lu_(i, j) * x[j];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) x[i] -= lu_(i, j) * x[j];
      x[i] /= lu_(i, i);
    }
    return x;
  }

 private:
  Matrix lu_;
  std::vector<std::size_t> perm_;
};

inline Vec lu_solve(const Matrix& a, std::span<const double> b) { return LuDecomposition(a).solve(b); }

// ---- banded ---------------------------------------------------------------

/// Square matrix with kl sub- and ku super-diagonals. Each row keeps kl extra
/// slots on the right for the fill-in produced by row interchanges.
class BandMatrix {
 public:
  BandMatrix(std::size_t n, std::size_t kl, std::size_t ku)
      : n_(n), kl_(kl), ku_(ku), width_(2 * kl + ku + 1), data_(n * width_, 0.0) {}

  std::size_t size() const noexcept { return n_; }
  std::size_t lower() const noexcept { return kl_; }
  std::size_t upper() const noexcept { return ku_; }

  bool in_band(std::size_t i, std::size_t j) const noexcept { return j + kl_ >= i && j <= i + ku_; }

  double& operator()(std::size_t i, std::size_t j) {
    if (!in_band(i, j)) fail(ErrorKind::ShapeMismatch, "band entry outside the declared bandwidth");
    return data_[i * width_ + (j + kl_ - i)];
  }
  double operator()(std::size_t i, std::size_t j) const {
    if (!in_band(i, j)) return 0.0;
    return data_[i * width_ + (j + kl_ - i)];
  }

  Matrix dense() const {
    Matrix m(n_, n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i > kl_ ? i - kl_ : 0; j < std::min(n_, i + ku_ + 1); ++j) m(i, j) = (*this)(i, j);
    return m;
  }

 private:
  friend class BandLu;
  double& slot(std::size_t i, std::size_t j) { return data_[i * width_ + (j + kl_ - i)]; }
  double slot(std::size_t i, std::size_t j) const { return data_[i * width_ + (j + kl_ - i)]; }

  std::size_t n_, kl_, ku_, width_;
  Vec data_;
};

/// Banded Gaussian elimination with partial pivoting; O(n·kl·(kl+ku)).
class BandLu {
 public:
  explicit BandLu(BandMatrix a) : a_(std::move(a)), perm_(a_.size()) {
    const std::size_t n = a_.size(), kl = a_.lower(), ku = a_.upper();
    double scale = 0.0;
    for (double v : a_.data_) scale = std::max(scale, std::abs(v));
    const double threshold = 1e-14 * scale;
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t last_row = std::min(n - 1, k + kl);
      const std::size_t last_col = std::min(n - 1, k + kl + ku);
      std::size_t piv = k;
      double best = std::abs(a_.slot(k, k));
      for (std::size_t i = k + 1; i <= last_row; ++i) {
        if (std::abs(a_.slot(i, k)) > best) {
          best = std::abs(a_.slot(i, k));
          piv = i;
        }
      }
      if (!(best > threshold)) {
        fail(ErrorKind::SingularMatrix, "pivot " + std::to_string(best) + " in column " + std::to_string(k));
      }
      perm_[k] = piv;
      if (piv != k)
        for (std::size_t j = k; j <= last_col; ++j) std::swap(a_.slot(k, j), a_.slot(piv, j));
      const double inv = 1.0 / a_.slot(k, k);
      for (std::size_t i = k + 1; i <= last_row; ++i) {
        double& l = a_.slot(i, k);
        if (l == 0.0) continue;
        l *= inv;
        for (std::size_t j = k + 1; j <= last_col; ++j) a_.slot(i, j) -= l * a_.slot(k, j);
      }
    }
  }

  Vec solve(std::span<const double> b) const {
    const std::size_t n = a_.size(), kl = a_.lower(), ku = a_.upper();
    if (b.size() != n) fail(ErrorKind::ShapeMismatch, "band solve right-hand side");
    Vec x(b.begin(), b.end());
    for (std::size_t k = 0; k < n; ++k) {
      if (perm_[k] != k) std::swap(x[k], x[perm_[k]]);
      for (std::size_t i = k + 1; i <= std::min(n - 1, k + kl); ++i) x[i] -= a_.slot(i, k) * x[k];
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j <= std::min(n - 1, i + kl + ku); ++j) x[i] -= a_.slot(i, j) * x[j];
      x[i] /= a_.slot(i, i);
    }
    return x;
  }

 private:
  BandMatrix a_;
  std::vector<std::size_t> perm_;
};

// ---- Cholesky -------------------------------------------------------------

/// A = LLᵀ for symmetric positive-definite A. Throws SingularMatrix when a
/// pivot is not strictly positive.
class Cholesky {
 public:
  explicit Cholesky(const Matrix& a) : l_(a.rows(), a.cols()) {
    if (!a.square()) fail(ErrorKind::ShapeMismatch, "Cholesky of a non-square matrix");
    const std::size_t n = a.rows();
    for (std::size_t j = 0; j < n; ++j) {
      double d = a(j, j);
      for (std::size_t k = 0; k < j; ++k) d -= l_(j, k) * l_(j, k);
      if (!(d > 0.0)) fail(ErrorKind::SingularMatrix, "Cholesky pivot not positive");
      l_(j, j) = std::sqrt(d);
      for (std::size_t i = j + 1; i < n; ++i) {
        double s = a(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= l_(i, k) * l_(j, k);
        l_(i, j) = s / l_(j, j);
      }
    }
  }

  const Matrix& factor() const noexcept { return l_; }

  /// Solves A x = b by two triangular solves.
  Vec solve(std::span<const double> b) const {
    const std::size_t n = l_.rows();
    Vec x(b.begin(), b.end());
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < i; ++k) x[i] -= l_(i, k) * x[k];
      x[i] /= l_(i, i);
    }
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t k = i + 1; k < n; ++k) x[i] -= l_(k, i) * x[k];
      x[i] /= l_(i, i);
    }
    return x;
  }

 private:
  Matrix l_;
};

// ---- eigenvalues ----------------------------------------------------------

struct Spectrum {
  std::vector<std::complex<double>> eigenvalues;
  double gap = 0.0;  // min_i |Re(eigenvalue_i)|

  std::size_t size() const noexcept { return eigenvalues.size(); }
};

namespace detail {

// Reduction to upper Hessenberg form by stabilized elementary similarity
// transformations. Works on a 1-based (n+1)x(n+1) buffer.
inline void reduce_hessenberg(std::vector<std::vector<double>>& a, int n) {
  for (int m = 2; m < n; ++m) {
    double x = 0.0;
    int i = m;
    for (int j = m; j <= n; ++j) {
      if (std::abs(a[j][m - 1]) > std::abs(x)) {
        x = a[j][m - 1];
        i = j;
      }
    }
    if (i != m) {
      for (int j = m - 1; j <= n; ++j) std::swap(a[i][j], a[m][j]);
      for (int j = 1; j <= n; ++j) std::swap(a[j][i], a[j][m]);
    }
    if (x != 0.0) {
      for (i = m + 1; i <= n; ++i) {
        double y = a[i][m - 1];
        if (y != 0.0) {
          y /= x;
          a[i][m - 1] = y;
          for (int j = m; j <= n; ++j) a[i][j] -= y * a[m][j];
          for (int j = 1; j <= n; ++j) a[j][m] += y * a[j][i];
        }
      }
    }
  }
  for (int i = 3; i <= n; ++i)
    for (int j = 1; j < i - 1; ++j) a[i][j] = 0.0;
}

inline double copy_sign(double magnitude, double sign_of) {
  return sign_of >= 0.0 ? std::abs(magnitude) : -std::abs(magnitude);
}

// Francis double-shift QR on an upper Hessenberg matrix (1-based buffer).
inline void hessenberg_qr(std::vector<std::vector<double>>& a, int n, std::vector<double>& wr,
                          std::vector<double>& wi) {
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const long max_sweeps = 100L * n;
  long sweeps = 0;
  double anorm = 0.0;
  for (int i = 1; i <= n; ++i)
    for (int j = std::max(i - 1, 1); j <= n; ++j) anorm += std::abs(a[i][j]);

  int nn = n;
  double t = 0.0;
  double p = 0.0, q = 0.0, r = 0.0, s = 0.0, w = 0.0, x = 0.0, y = 0.0, z = 0.0;
  while (nn >= 1) {
    int its = 0;
    int l = 0;
    do {
      for (l = nn; l >= 2; --l) {
        s = std::abs(a[l - 1][l - 1]) + std::abs(a[l][l]);
        if (s == 0.0) s = anorm;
        if (std::abs(a[l][l - 1]) <= eps * s) {
          a[l][l - 1] = 0.0;
          break;
        }
      }
      x = a[nn][nn];
      if (l == nn) {
        wr[nn] = x + t;
        wi[nn--] = 0.0;
      } else {
        y = a[nn - 1][nn - 1];
        w = a[nn][nn - 1] * a[nn - 1][nn];
        if (l == nn - 1) {
          p = 0.5 * (y - x);
          q = p * p + w;
          z = std::sqrt(std::abs(q));
          x += t;
          if (q >= 0.0) {
            z = p + copy_sign(z, p);
            wr[nn - 1] = wr[nn] = x + z;
            if (z != 0.0) wr[nn] = x - w / z;
            wi[nn - 1] = wi[nn] = 0.0;
          } else {
            wr[nn - 1] = wr[nn] = x + p;
            wi[nn - 1] = -(wi[nn] = z);
          }
          nn -= 2;
        } else {
          if (++sweeps > max_sweeps) {
            fail(ErrorKind::NoConvergence, "QR iteration exceeded " + std::to_string(max_sweeps) + " sweeps");
          }
          if (its > 0 && its % 10 == 0) {
            // exceptional shift
            t += x;
            for (int i = 1; i <= nn; ++i) a[i][i] -= x;
            s = std::abs(a[nn][nn - 1]) + std::abs(a[nn - 1][nn - 2]);
            y = x = 0.75 * s;
            w = -0.4375 * s * s;
          }
          ++its;
          int m = nn - 2;
          for (; m >= l; --m) {
            z = a[m][m];
            r = x - z;
            s = y - z;
            p = (r * s - w) / a[m + 1][m] + a[m][m + 1];
            q = a[m + 1][m + 1] - z - r - s;
            r = a[m + 2][m + 1];
            s = std::abs(p) + std::abs(q) + std::abs(r);
            p /= s;
            q /= s;
            r /= s;
            if (m == l) break;
            const double u = std::abs(a[m][m - 1]) * (std::abs(q) + std::abs(r));
            const double v = std::abs(p) * (std::abs(a[m - 1][m - 1]) + std::abs(z) + std::abs(a[m + 1][m + 1]));
            if (u <= eps * v) break;
          }
          for (int i = m + 2; i <= nn; ++i) {
            a[i][i - 2] = 0.0;
            if (i != m + 2) a[i][i - 3] = 0.0;
          }
          for (int k = m; k <= nn - 1; ++k) {
            if (k != m) {
              p = a[k][k - 1];
              q = a[k + 1][k - 1];
              r = 0.0;
              if (k != nn - 1) r = a[k + 2][k - 1];
              if ((x = std::abs(p) + std::abs(q) + std::abs(r)) != 0.0) {
                p /= x;
                q /= x;
                r /= x;
              }
            }
            if ((s = copy_sign(std::sqrt(p * p + q * q + r * r), p)) != 0.0) {
              if (k == m) {
                if (l != m) a[k][k - 1] = -a[k][k - 1];
              } else {
                a[k][k - 1] = -s * x;
              }
              p += s;
              x = p / s;
              y = q / s;
              z = r / s;
              q /= p;
              r /= p;
              for (int j = k; j <= nn; ++j) {
                p = a[k][j] + q * a[k + 1][j];
                if (k != nn - 1) {
                  p += r * a[k + 2][j];
                  a[k + 2][j] -= p * z;
                }
                a[k + 1][j] -= p * y;
                a[k][j] -= p * x;
              }
              const int mmin = nn < k + 3 ? nn : k + 3;
              for (int i = l; i <= mmin; ++i) {
                p = x * a[i][k] + y * a[i][k + 1];
                if (k != nn - 1) {
                  p += z * a[i][k + 2];
                  a[i][k + 2] -= p * r;
                }
                a[i][k + 1] -= p * q;
                a[i][k] -= p;
              }
            }
          }
        }
      }
    } while (l < nn - 1);
  }
}

}  // namespace detail

/// All eigenvalues of a real square matrix, sorted by (real, imag).
inline Spectrum eigenvalues(const Matrix& a) {
  if (!a.square()) fail(ErrorKind::ShapeMismatch, "eigenvalues of a non-square matrix");
  const int n = static_cast<int>(a.rows());
  if (n > 64) fail(ErrorKind::ShapeMismatch, "eigenvalue solver limited to dimension 64");
  if (!a.all_finite()) fail(ErrorKind::NoConvergence, "matrix has non-finite entries");
  Spectrum out;
  if (n == 0) return out;

  std::vector<std::vector<double>> h(n + 1, std::vector<double>(n + 1, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) h[i + 1][j + 1] = a(i, j);
  detail::reduce_hessenberg(h, n);
  std::vector<double> wr(n + 1, 0.0), wi(n + 1, 0.0);
  detail::hessenberg_qr(h, n, wr, wi);

  out.eigenvalues.reserve(n);
  for (int i = 1; i <= n; ++i) out.eigenvalues.emplace_back(wr[i], wi[i]);
  std::sort(out.eigenvalues.begin(), out.eigenvalues.end(), [](auto l, auto r) {
    return l.real() != r.real() ? l.real() < r.real() : l.imag() < r.imag();
  });
  out.gap = std::numeric_limits<double>::infinity();
  for (auto ev : out.eigenvalues) out.gap = std::min(out.gap, std::abs(ev.real()));
  return out;
}

/// Residual ‖Av − λv‖ / ‖v‖ of the eigenvector recovered by complex inverse
/// iteration at the given eigenvalue. Used to cross-check computed spectra.
inline double eigen_residual(const Matrix& a, std::complex<double> lambda) {
  using C = std::complex<double>;
  const std::size_t n = a.rows();
  const double scale = std::max(1.0, a.max_abs());
  // Slightly perturbed shift keeps the shifted matrix invertible.
  const C shift = lambda + C(1e-10 * scale, 1e-10 * scale);
  std::vector<std::vector<C>> m(n, std::vector<C>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) m[i][j] = C(a(i, j)) - (i == j ? shift : C(0.0));
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m[i][k]) > std::abs(m[piv][k])) piv = i;
    std::swap(m[k], m[piv]);
    std::swap(perm[k], perm[piv]);
    if (std::abs(m[k][k]) == 0.0) m[k][k] = C(1e-300);
    for (std::size_t i = k + 1; i < n; ++i) {
      m[i][k] /= m[k][k];
      for (std::size_t j = k + 1; j < n; ++j) m[i][j] -= m[i][k] * m[k][j];
    }
  }
  std::vector<C> v(n, C(1.0, 0.5));
  for (int iter = 0; iter < 3; ++iter) {
    std::vector<C> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = v[perm[i]];
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < i; ++j) x[i] -= m[i][j] * x[j];
    for (std::size_t i = n; i-- > 0;) {
      for (std::size_t j = i + 1; j < n; ++j) x[i] -= m[i][j] * x[j];
      x[i] /= m[i][i];
    }
    double nrm = 0.0;
    for (auto c : x) nrm += std::norm(c);
    nrm = std::sqrt(nrm);
    for (std::size_t i = 0; i < n; ++i) v[i] = x[i] / nrm;
  }
  double res = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    C s = -lambda * v[i];
    for (std::size_t j = 0; j < n; ++j) s += a(i, j) * v[j];
    res += std::norm(s);
  }
  return std::sqrt(res);
}

}  // namespace trimturn
