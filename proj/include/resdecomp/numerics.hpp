#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace resdecomp {

using Vector = std::vector<float>;

// Dense row-major float32 matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f);
    Matrix(std::size_t rows, std::size_t cols, std::vector<float> data);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

inline constexpr float kDefaultNormEps = 1e-5f;
inline constexpr double kProbabilityFloor = 1e-12;

// Dot product accumulated in double.
double dot(std::span<const float> a, std::span<const float> b);

// W * x, each row accumulated in double.
Vector matvec(const Matrix& w, std::span<const float> x);

// W[:, col_begin:col_end] * x
Vector matvec_columns(const Matrix& w, std::size_t col_begin, std::size_t col_end,
                      std::span<const float> x);

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

// sqrt(mean(x^2) + eps)
double root_mean_square(std::span<const float> x, float eps);

// x_i * gamma_i / sqrt(mean(x^2) + eps)
Vector rms_norm(std::span<const float> x, std::span<const float> gamma, float eps);

std::vector<double> softmax_stable(std::span<const double> logits);
Vector softmax_stable(std::span<const float> logits);

// -log(max(probs[gold], 1e-12))
double cross_entropy(std::span<const double> probs, std::size_t gold);
double cross_entropy(std::span<const float> probs, std::size_t gold);

// Index of the maximum; ties go to the lowest index.
std::size_t argmax(std::span<const float> v);
std::size_t argmax(std::span<const double> v);

void add_inplace(std::span<float> acc, std::span<const float> x);

bool all_finite(std::span<const float> v);

}  // namespace resdecomp
