#ifndef REGIONQA_TENSOR_HPP_
#define REGIONQA_TENSOR_HPP_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace regionqa {

using Vector = std::vector<double>;

/// Dense row-major matrix of doubles. Column vectors are stored as n x 1.
class Tensor2 {
 public:
  Tensor2() = default;
  Tensor2(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Tensor2(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor2 column(std::span<const double> values);
  static Tensor2 identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);

  void fill(double value);
  Tensor2 transposed() const;

  /// "RxC", used in error messages.
  std::string shape_string() const;

  bool operator==(const Tensor2& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// out = a * b
Tensor2 matmul(const Tensor2& a, const Tensor2& b);
/// out = a^T * b
Tensor2 matmul_tn(const Tensor2& a, const Tensor2& b);
/// out = a * b^T
Tensor2 matmul_nt(const Tensor2& a, const Tensor2& b);

/// y = m * x
Vector matvec(const Tensor2& m, std::span<const double> x);
/// y = m^T * x
Vector matvec_t(const Tensor2& m, std::span<const double> x);
/// m += scale * u v^T
void add_outer(Tensor2& m, std::span<const double> u, std::span<const double> v, double scale = 1.0);

double dot(std::span<const double> a, std::span<const double> b);
/// y += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> y);

bool all_finite(std::span<const double> values);

}  // namespace regionqa

#endif  // REGIONQA_TENSOR_HPP_
