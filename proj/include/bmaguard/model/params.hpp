// Named, ordered collection of dense parameter tensors.

#ifndef BMAGUARD_MODEL_PARAMS_HPP_
#define BMAGUARD_MODEL_PARAMS_HPP_

#include <Eigen/Core>

#include <cstddef>
#include <string>
#include <vector>

namespace bmaguard {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Tensors keep their declaration order; that order is the checkpoint order.
/// Vectors are stored as n x 1 matrices.
template <typename Scalar>
class ParamSet {
public:
  std::size_t add(std::string name, Eigen::Index rows, Eigen::Index cols) {
    names_.push_back(std::move(name));
    tensors_.push_back(Mat<Scalar>::Zero(rows, cols));
    return tensors_.size() - 1;
  }

  Mat<Scalar>& operator[](std::size_t i) { return tensors_[i]; }
  const Mat<Scalar>& operator[](std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const noexcept { return tensors_.size(); }

  Eigen::Index scalar_count() const {
    Eigen::Index n = 0;
    for (const auto& t : tensors_) n += t.size();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out = *this;
    out.set_zero();
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) t.setZero();
  }

  bool all_finite() const {
    for (const auto& t : tensors_)
      if (!t.allFinite()) return false;
    return true;
  }

  template <typename To>
  ParamSet<To> cast() const {
    ParamSet<To> out;
    for (std::size_t i = 0; i < size(); ++i) {
      out.add(names_[i], tensors_[i].rows(), tensors_[i].cols());
      out[i] = tensors_[i].template cast<To>();
    }
    return out;
  }

  ParamSet& operator+=(const ParamSet& other) {
    for (std::size_t i = 0; i < size(); ++i) tensors_[i] += other.tensors_[i];
    return *this;
  }

  ParamSet& operator*=(Scalar s) {
    for (auto& t : tensors_) t *= s;
    return *this;
  }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.names_ != b.names_) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
      if (a.tensors_[i].rows() != b.tensors_[i].rows() || a.tensors_[i].cols() != b.tensors_[i].cols() ||
          a.tensors_[i] != b.tensors_[i])
        return false;
    return true;
  }

private:
  std::vector<std::string> names_;
  std::vector<Mat<Scalar>> tensors_;
};

} // namespace bmaguard

#endif
