#pragma once

#include <initializer_list>
#include <span>
#include <vector>

namespace fluid_exit {

// Row-major dense matrix for the desk-scale kernels (m stays small, so no
// sparse path and no external linear-algebra dependency).
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(int rows, int cols);  // zero-filled
  DenseMatrix(std::initializer_list<std::initializer_list<double>> rows);

  static DenseMatrix identity(int n);
  static DenseMatrix diagonal(std::span<const double> entries);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(int i, int j) { return data_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols_ + j]; }

  DenseMatrix block(int row0, int col0, int nrows, int ncols) const;
  void set_block(int row0, int col0, const DenseMatrix& b);

  double inf_norm() const;  // max absolute row sum
  double one_norm() const;  // max absolute column sum
  double max_abs() const;
  bool all_finite() const;

  std::vector<double> apply(std::span<const double> x) const;  // A * x

  DenseMatrix& operator+=(const DenseMatrix& rhs);
  DenseMatrix& operator-=(const DenseMatrix& rhs);
  DenseMatrix& operator*=(double scale);

  friend DenseMatrix operator+(DenseMatrix lhs, const DenseMatrix& rhs) { return lhs += rhs; }
  friend DenseMatrix operator-(DenseMatrix lhs, const DenseMatrix& rhs) { return lhs -= rhs; }
  friend DenseMatrix operator*(DenseMatrix lhs, double s) { return lhs *= s; }
  friend DenseMatrix operator*(double s, DenseMatrix rhs) { return rhs *= s; }
  friend DenseMatrix operator*(const DenseMatrix& lhs, const DenseMatrix& rhs);

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> data_;
};

// Solves A x = b by partially pivoted elimination. Throws SingularMatrix when
// a pivot falls below 1e-13 * ||A||_inf.
std::vector<double> solve_linear(const DenseMatrix& a, std::span<const double> b);

// Multi right-hand-side variant: returns X with A X = B.
DenseMatrix solve_linear(const DenseMatrix& a, const DenseMatrix& b);

// e^A by scaling-and-squaring with diagonal Pade approximants, the degree
// picked from the 1-norm of the input. relTol must lie in (0, 1e-6]; the
// kernel itself resolves to near machine precision on well-conditioned
// inputs. Throws Overflow when the result leaves the representable range.
DenseMatrix matrix_exp(const DenseMatrix& a, double rel_tol = 1e-13);

// Solves X A + B X = C (X is p x q, A q x q, B p x p, C p x q) through the
// p*q x p*q linearization. Throws SingularMatrix when A and -B share an
// eigenvalue within tolerance.
DenseMatrix solve_sylvester(const DenseMatrix& b, const DenseMatrix& a, const DenseMatrix& c);

}  // namespace fluid_exit
