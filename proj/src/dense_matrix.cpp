#include "fluid_exit/dense_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "fluid_exit/errors.hpp"

namespace fluid_exit {

namespace {

void check_same_shape(const DenseMatrix& a, const DenseMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    raise(Errc::ShapeMismatch, std::string(op) + ": incompatible shapes");
}

}  // namespace

DenseMatrix::DenseMatrix(int rows, int cols) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) raise(Errc::ShapeMismatch, "negative dimension");
  data_.assign(static_cast<std::size_t>(rows) * cols, 0.0);
}

DenseMatrix::DenseMatrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = static_cast<int>(rows.size());
  cols_ = rows_ > 0 ? static_cast<int>(rows.begin()->size()) : 0;
  data_.reserve(static_cast<std::size_t>(rows_) * cols_);
  for (const auto& r : rows) {
    if (static_cast<int>(r.size()) != cols_)
      raise(Errc::ShapeMismatch, "ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

DenseMatrix DenseMatrix::identity(int n) {
  DenseMatrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMatrix DenseMatrix::diagonal(std::span<const double> entries) {
  DenseMatrix m(static_cast<int>(entries.size()), static_cast<int>(entries.size()));
  for (int i = 0; i < m.rows(); ++i) m(i, i) = entries[i];
  return m;
}

DenseMatrix DenseMatrix::block(int row0, int col0, int nrows, int ncols) const {
  if (row0 < 0 || col0 < 0 || row0 + nrows > rows_ || col0 + ncols > cols_)
    raise(Errc::ShapeMismatch, "block out of range");
  DenseMatrix out(nrows, ncols);
  for (int i = 0; i < nrows; ++i)
    for (int j = 0; j < ncols; ++j) out(i, j) = (*this)(row0 + i, col0 + j);
  return out;
}

void DenseMatrix::set_block(int row0, int col0, const DenseMatrix& b) {
  if (row0 + b.rows() > rows_ || col0 + b.cols() > cols_)
    raise(Errc::ShapeMismatch, "set_block out of range");
  for (int i = 0; i < b.rows(); ++i)
    for (int j = 0; j < b.cols(); ++j) (*this)(row0 + i, col0 + j) = b(i, j);
}

double DenseMatrix::inf_norm() const {
  double best = 0.0;
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols_; ++j) s += std::abs((*this)(i, j));
    best = std::max(best, s);
  }
  return best;
}

double DenseMatrix::one_norm() const {
  double best = 0.0;
  for (int j = 0; j < cols_; ++j) {
    double s = 0.0;
    for (int i = 0; i < rows_; ++i) s += std::abs((*this)(i, j));
    best = std::max(best, s);
  }
  return best;
}

double DenseMatrix::max_abs() const {
  double best = 0.0;
  for (double v : data_) best = std::max(best, std::abs(v));
  return best;
}

bool DenseMatrix::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::vector<double> DenseMatrix::apply(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != cols_)
    raise(Errc::ShapeMismatch, "apply: vector length mismatch");
  std::vector<double> y(rows_, 0.0);
  for (int i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (int j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

DenseMatrix& DenseMatrix::operator+=(const DenseMatrix& rhs) {
  check_same_shape(*this, rhs, "operator+");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += rhs.data_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator-=(const DenseMatrix& rhs) {
  check_same_shape(*this, rhs, "operator-");
  for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= rhs.data_[k];
  return *this;
}

DenseMatrix& DenseMatrix::operator*=(double scale) {
  for (double& v : data_) v *= scale;
  return *this;
}

DenseMatrix operator*(const DenseMatrix& lhs, const DenseMatrix& rhs) {
  if (lhs.cols() != rhs.rows()) raise(Errc::ShapeMismatch, "operator*: inner dimensions differ");
  DenseMatrix out(lhs.rows(), rhs.cols());
  for (int i = 0; i < lhs.rows(); ++i) {
    for (int k = 0; k < lhs.cols(); ++k) {
      const double a = lhs(i, k);
      if (a == 0.0) continue;
      for (int j = 0; j < rhs.cols(); ++j) out(i, j) += a * rhs(k, j);
    }
  }
  return out;
}

namespace {

// In-place LU with partial pivoting; piv[i] records the row swapped into i.
void lu_factor(DenseMatrix& a, std::vector<int>& piv) {
  const int n = a.rows();
  const double threshold = 1e-13 * a.inf_norm();
  piv.resize(n);
  for (int k = 0; k < n; ++k) {
    int best = k;
    double best_abs = std::abs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      const double cand = std::abs(a(i, k));
      if (cand > best_abs) {
        best_abs = cand;
        best = i;
      }
    }
    if (best_abs <= threshold)
      raise(Errc::SingularMatrix, "pivot below 1e-13 * ||A||_inf");
    piv[k] = best;
    if (best != k)
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(best, j));
    const double inv_pivot = 1.0 / a(k, k);
    for (int i = k + 1; i < n; ++i) {
      const double factor = a(i, k) * inv_pivot;
      a(i, k) = factor;
      if (factor == 0.0) continue;
      for (int j = k + 1; j < n; ++j) a(i, j) -= factor * a(k, j);
    }
  }
}

void lu_solve_inplace(const DenseMatrix& lu, const std::vector<int>& piv,
                      std::span<double> x) {
  const int n = lu.rows();
  for (int k = 0; k < n; ++k)
    if (piv[k] != k) std::swap(x[k], x[piv[k]]);
  for (int i = 1; i < n; ++i) {
    double s = x[i];
    for (int j = 0; j < i; ++j) s -= lu(i, j) * x[j];
    x[i] = s;
  }
  for (int i = n - 1; i >= 0; --i) {
    double s = x[i];
    for (int j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
    x[i] = s / lu(i, i);
  }
}

}  // namespace

std::vector<double> solve_linear(const DenseMatrix& a, std::span<const double> b) {
  if (!a.square()) raise(Errc::ShapeMismatch, "solve_linear: matrix not square");
  if (static_cast<int>(b.size()) != a.rows())
    raise(Errc::ShapeMismatch, "solve_linear: rhs length mismatch");
  DenseMatrix lu = a;
  std::vector<int> piv;
  lu_factor(lu, piv);
  std::vector<double> x(b.begin(), b.end());
  lu_solve_inplace(lu, piv, x);
  for (double v : x)
    if (!std::isfinite(v)) raise(Errc::SingularMatrix, "non-finite solution");
  return x;
}

DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b) {
  if (!a.square()) raise(Errc::ShapeMismatch, "solve_linear: matrix not square");
  if (b.rows() != a.rows()) raise(Errc::ShapeMismatch, "solve_linear: rhs rows mismatch");
  DenseMatrix lu = a;
  std::vector<int> piv;
  lu_factor(lu, piv);
  DenseMatrix x = b;
  std::vector<double> col(a.rows());
  for (int j = 0; j < b.cols(); ++j) {
    for (int i = 0; i < a.rows(); ++i) col[i] = x(i, j);
    lu_solve_inplace(lu, piv, col);
    for (int i = 0; i < a.rows(); ++i) {
      if (!std::isfinite(col[i])) raise(Errc::SingularMatrix, "non-finite solution");
      x(i, j) = col[i];
    }
  }
  return x;
}

namespace {

// Pade numerator coefficients for degrees 3..13 and the matching 1-norm
// switch points (Higham 2005).
const double kPade3[] = {120.0, 60.0, 12.0, 1.0};
const double kPade5[] = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
const double kPade7[] = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                         25200.0,    1512.0,    56.0,      1.0};
const double kPade9[] = {17643225600.0, 8821612800.0, 2075673600.0,
                         302702400.0,   30270240.0,   2162160.0,
                         110880.0,      3960.0,       90.0,
                         1.0};
const double kPade13[] = {64764752532480000.0, 32382376266240000.0,
                          7771770303897600.0,  1187353796428800.0,
                          129060195264000.0,   10559470521600.0,
                          670442572800.0,      33522128640.0,
                          1323241920.0,        40840800.0,
                          960960.0,            16380.0,
                          182.0,               1.0};
const double kTheta3 = 1.495585217958292e-2;
const double kTheta5 = 2.539398330063230e-1;
const double kTheta7 = 9.504178996162932e-1;
const double kTheta9 = 2.097847961257068e0;
const double kTheta13 = 5.371920351148152e0;

DenseMatrix pade_low(const DenseMatrix& a, std::span<const double> b) {
  // U = A (b1 I + b3 A^2 + ...), V = b0 I + b2 A^2 + ...
  const int n = a.rows();
  const int degree = static_cast<int>(b.size()) - 1;
  std::vector<DenseMatrix> even;  // A^0, A^2, A^4, ...
  even.push_back(DenseMatrix::identity(n));
  DenseMatrix a2 = a * a;
  for (int p = 2; p <= degree - 1; p += 2)
    even.push_back(p == 2 ? a2 : even.back() * a2);
  DenseMatrix u_inner(n, n), v(n, n);
  for (int p = 0; p <= degree; ++p) {
    const DenseMatrix& pw = even[p / 2];
    if (p % 2 == 1)
      u_inner += b[p] * pw;
    else
      v += b[p] * pw;
  }
  DenseMatrix u = a * u_inner;
  DenseMatrix p_mat = v + u;
  DenseMatrix q_mat = v - u;
  return solve_linear(q_mat, p_mat);
}

DenseMatrix pade13(const DenseMatrix& a) {
  const int n = a.rows();
  const std::span<const double> b(kPade13, 14);
  DenseMatrix a2 = a * a;
  DenseMatrix a4 = a2 * a2;
  DenseMatrix a6 = a4 * a2;
  DenseMatrix ident = DenseMatrix::identity(n);
  DenseMatrix u_hi = a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2);
  DenseMatrix u = a * (u_hi + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * ident);
  DenseMatrix v_hi = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2);
  DenseMatrix v = v_hi + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * ident;
  DenseMatrix p_mat = v + u;
  DenseMatrix q_mat = v - u;
  return solve_linear(q_mat, p_mat);
}

}  // namespace

DenseMatrix matrix_exp(const DenseMatrix& a, double rel_tol) {
  if (!a.square()) raise(Errc::ShapeMismatch, "matrix_exp: matrix not square");
  if (!(rel_tol > 0.0) || rel_tol > 1e-6)
    raise(Errc::PreconditionViolated, "matrix_exp: relTol must be in (0, 1e-6]");
  if (!a.all_finite()) raise(Errc::Overflow, "matrix_exp: non-finite input");

  const double norm = a.one_norm();
  DenseMatrix result;
  if (norm <= kTheta3) {
    result = pade_low(a, std::span<const double>(kPade3, 4));
  } else if (norm <= kTheta5) {
    result = pade_low(a, std::span<const double>(kPade5, 6));
  } else if (norm <= kTheta7) {
    result = pade_low(a, std::span<const double>(kPade7, 8));
  } else if (norm <= kTheta9) {
    result = pade_low(a, std::span<const double>(kPade9, 10));
  } else {
    int squarings = std::max(0, static_cast<int>(std::ceil(std::log2(norm / kTheta13))));
    DenseMatrix scaled = a;
    scaled *= std::ldexp(1.0, -squarings);
    result = pade13(scaled);
    for (int k = 0; k < squarings; ++k) result = result * result;
  }
  if (!result.all_finite()) raise(Errc::Overflow, "matrix_exp: result not representable");
  return result;
}

DenseMatrix solve_sylvester(const DenseMatrix& b, const DenseMatrix& a, const DenseMatrix& c) {
  if (!a.square() || !b.square()) raise(Errc::ShapeMismatch, "solve_sylvester: A, B must be square");
  const int p = b.rows();
  const int q = a.rows();
  if (c.rows() != p || c.cols() != q)
    raise(Errc::ShapeMismatch, "solve_sylvester: C must be p x q");

  // (X A + B X)_{ij} = sum_l X_{il} A_{lj} + sum_k B_{ik} X_{kj};
  // with flat index (i, j) -> i*q + j the operator matrix reads
  // M[(i,j),(k,l)] = delta_{ik} A_{lj} + delta_{lj} B_{ik}.
  const int n = p * q;
  DenseMatrix op(n, n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) {
      const int row = i * q + j;
      for (int l = 0; l < q; ++l) op(row, i * q + l) += a(l, j);
      for (int k = 0; k < p; ++k) op(row, k * q + j) += b(i, k);
    }

  std::vector<double> rhs(n);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) rhs[i * q + j] = c(i, j);

  std::vector<double> flat = solve_linear(op, rhs);
  DenseMatrix x(p, q);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < q; ++j) x(i, j) = flat[i * q + j];
  return x;
}

}  // namespace fluid_exit
