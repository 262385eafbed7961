#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace hpf {

using Complex = std::complex<double>;
using ComplexVector = Eigen::VectorXcd;
using ComplexMatrix = Eigen::MatrixXcd;
using RealVector = Eigen::VectorXd;
using RealMatrix = Eigen::MatrixXd;

inline constexpr double kPi = 3.14159265358979323846;
inline constexpr Complex kJ{0.0, 1.0};

/// Signed harmonic orders retained by a study, tied to the fundamental
/// frequency. Conjugate-complete by construction: h in the set implies -h,
/// so real time signals are representable.
class HarmonicSet {
 public:
  HarmonicSet(double f0_hz, std::vector<int> orders) : f0_(f0_hz), orders_(std::move(orders)) {
    if (f0_ <= 0.0) throw std::invalid_argument("HarmonicSet: f0 must be positive");
    std::sort(orders_.begin(), orders_.end());
    orders_.erase(std::unique(orders_.begin(), orders_.end()), orders_.end());
    if (orders_.empty()) throw std::invalid_argument("HarmonicSet: empty order list");
    for (int h : orders_) {
      if (!contains(-h))
        throw std::invalid_argument("HarmonicSet: order " + std::to_string(h) +
                                    " present without its mirror " + std::to_string(-h));
    }
  }

  /// AC default: orders +-1..+-H, no DC component.
  static HarmonicSet ac_default(double f0_hz, int max_order) {
    std::vector<int> o;
    for (int h = -max_order; h <= max_order; ++h)
      if (h != 0) o.push_back(h);
    return {f0_hz, std::move(o)};
  }

  /// DC default: all orders -H..H including 0.
  static HarmonicSet dc_default(double f0_hz, int max_order) {
    std::vector<int> o;
    for (int h = -max_order; h <= max_order; ++h) o.push_back(h);
    return {f0_hz, std::move(o)};
  }

  double f0() const { return f0_; }
  double omega0() const { return 2.0 * kPi * f0_; }
  double period() const { return 1.0 / f0_; }
  int max_order() const { return std::max(std::abs(orders_.front()), std::abs(orders_.back())); }
  int size() const { return static_cast<int>(orders_.size()); }
  const std::vector<int>& orders() const { return orders_; }
  int order_at(int index) const { return orders_.at(static_cast<std::size_t>(index)); }

  bool contains(int h) const {
    return std::binary_search(orders_.begin(), orders_.end(), h);
  }

  int index_of(int h) const {
    auto it = std::lower_bound(orders_.begin(), orders_.end(), h);
    if (it == orders_.end() || *it != h)
      throw std::out_of_range("HarmonicSet: order " + std::to_string(h) + " not in set");
    return static_cast<int>(it - orders_.begin());
  }

  bool operator==(const HarmonicSet& o) const { return f0_ == o.f0_ && orders_ == o.orders_; }
  bool operator!=(const HarmonicSet& o) const { return !(*this == o); }

 private:
  double f0_;
  std::vector<int> orders_;
};

/// Stacked complex Fourier coefficients of a polyphase periodic signal,
/// in the convention x(t) = sum_h X_h exp(j h w0 t). Storage is order-major:
/// slot(order index k, phase p) = k * phases + p, matching the block layout
/// of the lifted harmonic-domain operators.
class PhasorVector {
 public:
  PhasorVector(HarmonicSet set, int phases)
      : set_(std::move(set)), phases_(phases),
        c_(ComplexVector::Zero(static_cast<Eigen::Index>(set_.size()) * phases)) {
    if (phases_ < 1) throw std::invalid_argument("PhasorVector: phases must be >= 1");
  }

  const HarmonicSet& harmonic_set() const { return set_; }
  int phases() const { return phases_; }
  Eigen::Index size() const { return c_.size(); }

  ComplexVector& data() { return c_; }
  const ComplexVector& data() const { return c_; }

  Eigen::Index slot(int phase, int h) const {
    return static_cast<Eigen::Index>(set_.index_of(h)) * phases_ + phase;
  }

  Complex at(int phase, int h) const { return c_(slot(phase, h)); }
  /// Coefficient of order h, zero when h lies outside the set.
  Complex at_or_zero(int phase, int h) const {
    return set_.contains(h) ? c_(slot(phase, h)) : Complex{0.0, 0.0};
  }
  void set(int phase, int h, Complex value) { c_(slot(phase, h)) = value; }
  void add(int phase, int h, Complex value) { c_(slot(phase, h)) += value; }

  /// Sets order h and its mirror -h consistently for a real signal.
  void set_pair(int phase, int h, Complex value) {
    set(phase, h, value);
    if (h != 0) set(phase, -h, std::conj(value));
    else c_(slot(phase, 0)) = Complex{value.real(), 0.0};
  }

  double conjugate_symmetry_error() const {
    double err = 0.0;
    for (int p = 0; p < phases_; ++p)
      for (int h : set_.orders()) {
        if (h < 0) continue;
        err = std::max(err, std::abs(at(p, h) - std::conj(at(p, -h))));
      }
    return err;
  }

  bool is_conjugate_symmetric(double tol = 1e-12) const {
    return conjugate_symmetry_error() <= tol;
  }

  /// Time-domain value of one phase at time t (real part of the series).
  double evaluate(int phase, double t, double omega0) const {
    Complex s{0.0, 0.0};
    for (int k = 0; k < set_.size(); ++k) {
      const int h = set_.order_at(k);
      s += c_(static_cast<Eigen::Index>(k) * phases_ + phase) *
           std::exp(kJ * (h * omega0 * t));
    }
    return s.real();
  }
  double evaluate(int phase, double t) const { return evaluate(phase, t, set_.omega0()); }

  PhasorVector& operator+=(const PhasorVector& o) { c_ += o.c_; return *this; }
  PhasorVector& operator-=(const PhasorVector& o) { c_ -= o.c_; return *this; }
  PhasorVector& operator*=(double s) { c_ *= s; return *this; }

 private:
  HarmonicSet set_;
  int phases_;
  ComplexVector c_;
};

/// Phantom-tagged spectra so that grid-forming responses cannot be queried
/// with a voltage and grid-following ones with a current.
template <class Tag>
class Spectrum : public PhasorVector {
 public:
  using PhasorVector::PhasorVector;
  explicit Spectrum(PhasorVector p) : PhasorVector(std::move(p)) {}
};
struct VoltageTag {};
struct CurrentTag {};
using VoltageSpectrum = Spectrum<VoltageTag>;
using CurrentSpectrum = Spectrum<CurrentTag>;

/// Truncated block-Toeplitz lifting of a periodic matrix M(t) given by its
/// Fourier coefficient series M_k. Grid block (row h, col h') equals
/// M_{h-h'}; applying the operator to the Fourier vector of x(t) yields the
/// Fourier vector of M(t) x(t) truncated to the retained orders.
class ToeplitzOperator {
 public:
  ToeplitzOperator(HarmonicSet set, int block_rows, int block_cols)
      : set_(std::move(set)), block_rows_(block_rows), block_cols_(block_cols) {
    if (block_rows_ < 1 || block_cols_ < 1)
      throw std::invalid_argument("ToeplitzOperator: block dims must be >= 1");
  }

  const HarmonicSet& harmonic_set() const { return set_; }
  int block_rows() const { return block_rows_; }
  int block_cols() const { return block_cols_; }

  void set_block(int k, ComplexMatrix m) {
    if (m.rows() != block_rows_ || m.cols() != block_cols_)
      throw std::invalid_argument("ToeplitzOperator: coefficient " + std::to_string(k) +
                                  " has inconsistent block dimensions");
    blocks_[k] = std::move(m);
  }

  bool has_block(int k) const { return blocks_.count(k) > 0; }

  ComplexMatrix block(int k) const {
    auto it = blocks_.find(k);
    if (it != blocks_.end()) return it->second;
    return ComplexMatrix::Zero(block_rows_, block_cols_);
  }

  const std::map<int, ComplexMatrix>& series() const { return blocks_; }

  ComplexMatrix to_matrix() const {
    const int n = set_.size();
    ComplexMatrix m = ComplexMatrix::Zero(static_cast<Eigen::Index>(n) * block_rows_,
                                          static_cast<Eigen::Index>(n) * block_cols_);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        auto it = blocks_.find(set_.order_at(i) - set_.order_at(j));
        if (it == blocks_.end()) continue;
        m.block(static_cast<Eigen::Index>(i) * block_rows_,
                static_cast<Eigen::Index>(j) * block_cols_, block_rows_, block_cols_) = it->second;
      }
    return m;
  }

  ComplexVector apply(const ComplexVector& x) const {
    const int n = set_.size();
    if (x.size() != static_cast<Eigen::Index>(n) * block_cols_)
      throw std::invalid_argument("ToeplitzOperator: vector length mismatch");
    ComplexVector y = ComplexVector::Zero(static_cast<Eigen::Index>(n) * block_rows_);
    for (const auto& [k, m] : blocks_)
      for (int j = 0; j < n; ++j) {
        const int h = set_.order_at(j) + k;
        if (!set_.contains(h)) continue;
        y.segment(static_cast<Eigen::Index>(set_.index_of(h)) * block_rows_, block_rows_) +=
            m * x.segment(static_cast<Eigen::Index>(j) * block_cols_, block_cols_);
      }
    return y;
  }

  PhasorVector apply(const PhasorVector& x) const {
    if (x.phases() != block_cols_ || x.harmonic_set() != set_)
      throw std::invalid_argument("ToeplitzOperator: phasor shape mismatch");
    PhasorVector y(set_, block_rows_);
    y.data() = apply(x.data());
    return y;
  }

 private:
  HarmonicSet set_;
  int block_rows_;
  int block_cols_;
  std::map<int, ComplexMatrix> blocks_;
};

inline ToeplitzOperator toeplitz_from_series(const std::map<int, ComplexMatrix>& coeffs,
                                             const HarmonicSet& set) {
  if (coeffs.empty()) throw std::invalid_argument("toeplitz_from_series: empty series");
  const auto& first = coeffs.begin()->second;
  ToeplitzOperator op(set, static_cast<int>(first.rows()), static_cast<int>(first.cols()));
  for (const auto& [k, m] : coeffs) op.set_block(k, m);
  return op;
}

/// Scalar series lifted to dim x dim diagonal blocks (per-phase symmetric use).
inline ToeplitzOperator toeplitz_from_scalar_series(const std::map<int, Complex>& coeffs,
                                                    const HarmonicSet& set, int dim) {
  ToeplitzOperator op(set, dim, dim);
  for (const auto& [k, c] : coeffs)
    op.set_block(k, c * ComplexMatrix::Identity(dim, dim));
  return op;
}

/// Block-diagonal lifting of d/dt on harmonic coefficients:
/// diag over orders h of (j h w0 I). Purely imaginary diagonal, zero at h = 0.
class FrequencyShiftOperator {
 public:
  FrequencyShiftOperator(HarmonicSet set, int state_dim)
      : set_(std::move(set)), state_dim_(state_dim) {
    if (state_dim_ < 1) throw std::invalid_argument("FrequencyShiftOperator: bad state_dim");
  }

  const HarmonicSet& harmonic_set() const { return set_; }
  int state_dim() const { return state_dim_; }

  ComplexVector diagonal() const {
    ComplexVector d(static_cast<Eigen::Index>(set_.size()) * state_dim_);
    for (int k = 0; k < set_.size(); ++k)
      d.segment(static_cast<Eigen::Index>(k) * state_dim_, state_dim_)
          .setConstant(kJ * (set_.order_at(k) * set_.omega0()));
    return d;
  }

  ComplexMatrix to_matrix() const { return diagonal().asDiagonal(); }

 private:
  HarmonicSet set_;
  int state_dim_;
};

// ---------------------------------------------------------------------------
// Real stacking. Newton-Raphson runs on real variables because constant-power
// responses involve conjugation, which is not complex-differentiable. A
// complex z maps to (Re z, Im z) and a complex linear operator to 2x2 blocks
// [[re, -im], [im, re]], so real_stacked(A x) = real_stacked(A) real_stacked(x).
// ---------------------------------------------------------------------------

inline RealVector to_real_stacked(const ComplexVector& v) {
  RealVector r(2 * v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    r(2 * i) = v(i).real();
    r(2 * i + 1) = v(i).imag();
  }
  return r;
}

inline ComplexVector from_real_stacked(const RealVector& r) {
  if (r.size() % 2 != 0) throw std::invalid_argument("from_real_stacked: odd length");
  ComplexVector v(r.size() / 2);
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = Complex{r(2 * i), r(2 * i + 1)};
  return v;
}

inline RealMatrix to_real_stacked(const ComplexMatrix& a) {
  RealMatrix r(2 * a.rows(), 2 * a.cols());
  for (Eigen::Index i = 0; i < a.rows(); ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      const Complex z = a(i, j);
      r(2 * i, 2 * j) = z.real();
      r(2 * i, 2 * j + 1) = -z.imag();
      r(2 * i + 1, 2 * j) = z.imag();
      r(2 * i + 1, 2 * j + 1) = z.real();
    }
  return r;
}

/// Relative smallest pivot of a computed LU factorization; a cheap probe
/// for numerically singular systems (Eigen's partial-pivot rcond estimate is
/// unreliable on rank-deficient input).
template <class Lu>
double lu_pivot_ratio(const Lu& lu) {
  const auto d = lu.matrixLU().diagonal().cwiseAbs().eval();
  const double mx = d.maxCoeff();
  return mx == 0.0 ? 0.0 : d.minCoeff() / mx;
}

/// 2x2 real Jacobian block of a scalar map f(z) with Wirtinger derivatives
/// a = df/dz and b = df/dzbar.
inline Eigen::Matrix2d wirtinger_block(Complex a, Complex b) {
  Eigen::Matrix2d m;
  m(0, 0) = (a + b).real();
  m(0, 1) = (b - a).imag();
  m(1, 0) = (a + b).imag();
  m(1, 1) = (a - b).real();
  return m;
}

// ---------------------------------------------------------------------------
// Discrete Fourier analysis of uniformly sampled periodic signals.
// ---------------------------------------------------------------------------

/// Fourier coefficients X_h = (1/T) integral x(t) exp(-j h w0 t) dt of one
/// uniformly sampled real signal spanning an integer number of fundamental
/// periods. The window length must be an integer period multiple and the
/// sampling must resolve the highest retained order.
inline ComplexVector dft_single(std::span<const double> samples, double dt,
                                const HarmonicSet& set) {
  const auto n = static_cast<std::int64_t>(samples.size());
  if (n < 2) throw std::invalid_argument("dft: need at least two samples");
  if (dt <= 0.0) throw std::invalid_argument("dft: dt must be positive");
  const double window = static_cast<double>(n) * dt;
  const double periods = window * set.f0();
  const auto m = static_cast<std::int64_t>(std::llround(periods));
  if (m < 1 || std::abs(periods - static_cast<double>(m)) > 1e-6)
    throw std::invalid_argument("dft: window does not span an integer period count (got " +
                                std::to_string(periods) + " periods)");
  const int h_max = set.max_order();
  if (n < 2 * (2 * h_max + 1))
    throw std::invalid_argument("dft: too few samples for H=" + std::to_string(h_max));
  if (n / m < 2 * (h_max + 1))
    throw std::invalid_argument("dft: sampling rate aliases order " + std::to_string(h_max));

  ComplexVector x(set.size());
  for (int k = 0; k < set.size(); ++k) {
    const std::int64_t h = set.order_at(k);
    Complex acc{0.0, 0.0};
    for (std::int64_t i = 0; i < n; ++i) {
      // h w0 t_i = 2 pi (h m i / n); reduce the rational phase exactly.
      const std::int64_t num = ((h * m * i) % n + n) % n;
      const double ang = -2.0 * kPi * static_cast<double>(num) / static_cast<double>(n);
      acc += samples[static_cast<std::size_t>(i)] * Complex{std::cos(ang), std::sin(ang)};
    }
    x(k) = acc / static_cast<double>(n);
  }
  return x;
}

inline PhasorVector dft_coefficients(const std::vector<std::vector<double>>& per_phase,
                                     double dt, const HarmonicSet& set) {
  if (per_phase.empty()) throw std::invalid_argument("dft: no phases");
  PhasorVector out(set, static_cast<int>(per_phase.size()));
  for (int p = 0; p < out.phases(); ++p) {
    if (per_phase[static_cast<std::size_t>(p)].size() != per_phase[0].size())
      throw std::invalid_argument("dft: ragged phase sample arrays");
    ComplexVector c = dft_single(per_phase[static_cast<std::size_t>(p)], dt, set);
    for (int k = 0; k < set.size(); ++k)
      out.data()(static_cast<Eigen::Index>(k) * out.phases() + p) = c(k);
  }
  return out;
}

}  // namespace hpf
