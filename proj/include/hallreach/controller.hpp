#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "hallreach/affine.hpp"
#include "hallreach/errors.hpp"
#include "hallreach/interval.hpp"
#include "hallreach/json_util.hpp"
#include "hallreach/lidar.hpp"
#include "hallreach/state.hpp"

namespace hallreach {

inline constexpr double kMaxSteeringDeg = 15.0;

enum class Activation { Tanh, Linear };

namespace controller_detail {

inline constexpr std::ptrdiff_t kBlock = 16;

/// acc[s] = sum_j w[j] * x[j * kBlock + s], accumulated in order of j.
inline void dot_block(const double* w, const double* x, std::ptrdiff_t n, double* acc) {
#if defined(__GNUC__)
  using v2d = double __attribute__((vector_size(16)));
  v2d a[kBlock / 2] = {};
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    const v2d wj = {w[j], w[j]};
    const double* xj = x + j * kBlock;
    for (std::ptrdiff_t q = 0; q < kBlock / 2; ++q) {
      v2d xv;
      std::memcpy(&xv, xj + 2 * q, sizeof xv);
      a[q] += wj * xv;
    }
  }
  std::memcpy(acc, a, sizeof a);
#else
  for (std::ptrdiff_t s = 0; s < kBlock; ++s) acc[s] = 0.0;
  for (std::ptrdiff_t j = 0; j < n; ++j) {
    for (std::ptrdiff_t s = 0; s < kBlock; ++s) acc[s] += w[j] * x[j * kBlock + s];
  }
#endif
}

}  // namespace controller_detail

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "linear"; }

struct Layer {
  Eigen::MatrixXd weights;  // outputs x inputs
  Eigen::VectorXd bias;
  Activation activation = Activation::Tanh;

  Eigen::Index rows() const { return weights.rows(); }
  Eigen::Index cols() const { return weights.cols(); }
};

/// Fully connected network mapping a scan to a steering angle.
///
/// Every evaluation routine accumulates each neuron as
/// ((0 + w_0 x_0) + w_1 x_1) + ... + bias, in input order, so the batched and
/// single evaluations agree bit for bit and the interval evaluation encloses
/// the floating-point result as well as the real one.
class MLPController {
 public:
  MLPController() = default;

  MLPController(std::vector<Layer> layers, double output_scale_deg = kMaxSteeringDeg,
                std::vector<double> input_offset = {}, std::vector<double> input_scale = {})
      : layers_(std::move(layers)),
        output_scale_deg_(output_scale_deg),
        input_offset_(std::move(input_offset)),
        input_scale_(std::move(input_scale)) {
    if (layers_.empty()) throw DimensionError("controller has no layers");
    const auto n = static_cast<std::size_t>(layers_.front().cols());
    if (input_offset_.empty()) input_offset_.assign(n, 0.0);
    if (input_scale_.empty()) input_scale_.assign(n, 1.0);
    validate();
    identity_input_ = std::all_of(input_offset_.begin(), input_offset_.end(), [](double v) { return v == 0.0; }) &&
                      std::all_of(input_scale_.begin(), input_scale_.end(), [](double v) { return v == 1.0; });
    output_scale_rad_ = deg_to_rad(output_scale_deg_);
    for (const Layer& l : layers_) row_major_.emplace_back(l.weights);
  }

  const std::vector<Layer>& layers() const { return layers_; }
  int input_dim() const { return static_cast<int>(layers_.front().cols()); }
  double output_scale_deg() const { return output_scale_deg_; }
  /// Largest steering magnitude in radians.
  double output_scale_rad() const { return output_scale_rad_; }
  const std::vector<double>& input_offset() const { return input_offset_; }
  const std::vector<double>& input_scale() const { return input_scale_; }

  void check_rays(const RayConfig& rays) const {
    if (rays.count != input_dim()) {
      throw DimensionError("controller expects " + std::to_string(input_dim()) + " rays, scenario has " +
                           std::to_string(rays.count));
    }
  }

  /// Steering angle in radians.
  double evaluate(std::span<const double> scan) const {
    check_input(scan.size());
    std::vector<double> x(scan.size());
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = preprocess(scan[j], j);
    std::vector<double> y;
    for (const Layer& l : layers_) {
      y.assign(static_cast<std::size_t>(l.rows()), 0.0);
      for (Eigen::Index j = 0; j < l.cols(); ++j) {
        const double xj = x[static_cast<std::size_t>(j)];
        const double* col = l.weights.col(j).data();
        for (std::size_t i = 0; i < y.size(); ++i) y[i] += col[i] * xj;
      }
      for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] += l.bias[static_cast<Eigen::Index>(i)];
        if (l.activation == Activation::Tanh) y[i] = std::tanh(y[i]);
      }
      x.swap(y);
    }
    return x[0] * output_scale_rad_;
  }

  double evaluate(const LidarScan& scan) const { return evaluate(scan.distances); }

  /// evaluate() applied to each column of `scans`; identical results.
  Eigen::VectorXd evaluate_batch(const Eigen::MatrixXd& scans) const {
    check_input(static_cast<std::size_t>(scans.rows()));
    Eigen::VectorXd out(scans.cols());
    constexpr Eigen::Index kBlock = controller_detail::kBlock;
    std::size_t width = static_cast<std::size_t>(scans.rows());
    for (const Layer& l : layers_) width = std::max(width, static_cast<std::size_t>(l.rows()));
    // Neuron-major activations for one block of samples.
    std::vector<double> x(width * kBlock);
    std::vector<double> y(width * kBlock);
    for (Eigen::Index start = 0; start < scans.cols(); start += kBlock) {
      const Eigen::Index nb = std::min(kBlock, scans.cols() - start);
      for (Eigen::Index j = 0; j < scans.rows(); ++j) {
        for (Eigen::Index s = 0; s < nb; ++s) {
          x[static_cast<std::size_t>(j * kBlock + s)] = preprocess(scans(j, start + s), static_cast<std::size_t>(j));
        }
      }
      for (const Layer& l : layers_) {
        const RowMajorMatrix& wr = row_major_[static_cast<std::size_t>(&l - layers_.data())];
        for (Eigen::Index i = 0; i < l.rows(); ++i) {
          std::array<double, kBlock> acc{};
          controller_detail::dot_block(wr.row(i).data(), x.data(), l.cols(), acc.data());
          double* yi = y.data() + i * kBlock;
          const double b = l.bias[i];
          for (Eigen::Index s = 0; s < nb; ++s) {
            const double v = acc[static_cast<std::size_t>(s)] + b;
            yi[s] = l.activation == Activation::Tanh ? std::tanh(v) : v;
          }
        }
        x.swap(y);
      }
      for (Eigen::Index s = 0; s < nb; ++s) out[start + s] = x[static_cast<std::size_t>(s)] * output_scale_rad_;
    }
    return out;
  }

  /// Interval enclosure of the steering angle over a box of scans.
  Interval evaluate_enclosure(std::span<const Interval> scan) const {
    check_input(scan.size());
    std::vector<double> lo(scan.size());
    std::vector<double> hi(scan.size());
    for (std::size_t j = 0; j < scan.size(); ++j) {
      const Interval t = preprocess(scan[j], j);
      lo[j] = t.lo();
      hi[j] = t.hi();
    }
    std::vector<double> ylo;
    std::vector<double> yhi;
    for (const Layer& l : layers_) {
      const auto rows = static_cast<std::size_t>(l.rows());
      ylo.assign(rows, 0.0);
      yhi.assign(rows, 0.0);
      for (Eigen::Index j = 0; j < l.cols(); ++j) {
        const double a = lo[static_cast<std::size_t>(j)];
        const double b = hi[static_cast<std::size_t>(j)];
        const double* col = l.weights.col(j).data();
        for (std::size_t i = 0; i < rows; ++i) {
          const double w = col[i];
          if (w == 0.0) continue;
          const double plo = w > 0.0 ? w * a : w * b;
          const double phi = w > 0.0 ? w * b : w * a;
          ylo[i] = round_down(ylo[i] + round_down(plo));
          yhi[i] = round_up(yhi[i] + round_up(phi));
        }
      }
      for (std::size_t i = 0; i < rows; ++i) {
        const double b = l.bias[static_cast<Eigen::Index>(i)];
        ylo[i] = round_down(ylo[i] + b);
        yhi[i] = round_up(yhi[i] + b);
        if (l.activation == Activation::Tanh) {
          const Interval t = tanh(Interval(ylo[i], yhi[i]));
          ylo[i] = t.lo();
          yhi[i] = t.hi();
        }
      }
      lo.swap(ylo);
      hi.swap(yhi);
    }
    return scale_output(Interval(std::max(lo[0], -1.0), std::min(hi[0], 1.0)));
  }

  /// First-order enclosure: carries linear dependence on the symbols of the
  /// inputs through the affine layers; tanh adds one fresh symbol per neuron.
  AffineForm evaluate_enclosure(std::span<const AffineForm> scan, NoiseContext& ctx) const {
    check_input(scan.size());
    std::vector<AffineForm> in(scan.begin(), scan.end());
    if (!identity_input_) {
      for (std::size_t j = 0; j < in.size(); ++j) in[j] = input_scale_[j] * (in[j] - input_offset_[j]);
    }
    std::vector<AffineForm> out;
    for (const Layer& l : layers_) {
      out = affine_layer(l, in);
      if (l.activation == Activation::Tanh) {
        for (auto& f : out) f = tanh(f, ctx);
      }
      in.swap(out);
    }
    AffineForm y = clamp(in[0], -1.0, 1.0, ctx);
    y = output_scale_rad_ * y;
    return clamp(y, -output_scale_rad_, output_scale_rad_, ctx);
  }

 private:
  void validate() const {
    for (std::size_t k = 0; k < layers_.size(); ++k) {
      const Layer& l = layers_[k];
      if (l.rows() < 1 || l.cols() < 1) throw DimensionError("layer " + std::to_string(k) + " is empty");
      if (l.bias.size() != l.rows()) throw DimensionError("layer " + std::to_string(k) + " bias length mismatch");
      if (k > 0 && l.cols() != layers_[k - 1].rows()) {
        throw DimensionError("layer " + std::to_string(k) + " expects " + std::to_string(l.cols()) +
                             " inputs but the previous layer has " + std::to_string(layers_[k - 1].rows()) +
                             " outputs");
      }
      if (!l.weights.allFinite() || !l.bias.allFinite()) {
        throw ConfigError("layer " + std::to_string(k) + " has non-finite parameters");
      }
    }
    if (layers_.back().rows() != 1) throw DimensionError("controller must have a single output");
    if (layers_.back().activation != Activation::Tanh) throw ConfigError("final activation must be tanh");
    if (!(output_scale_deg_ > 0.0) || output_scale_deg_ > kMaxSteeringDeg) {
      throw ConfigError("output_scale_deg must be in (0, 15]");
    }
    const auto n = static_cast<std::size_t>(layers_.front().cols());
    if (input_offset_.size() != n || input_scale_.size() != n) {
      throw DimensionError("input_offset and input_scale must have one entry per input");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(input_offset_[j]) || !std::isfinite(input_scale_[j])) {
        throw ConfigError("input preprocessing must be finite");
      }
    }
  }

  void check_input(std::size_t n) const {
    if (n != static_cast<std::size_t>(input_dim())) {
      throw DimensionError("scan has " + std::to_string(n) + " rays, controller expects " +
                           std::to_string(input_dim()));
    }
  }

  double preprocess(double d, std::size_t j) const {
    if (identity_input_) return d;
    return (d - input_offset_[j]) * input_scale_[j];
  }

  Interval preprocess(const Interval& d, std::size_t j) const {
    if (identity_input_) return d;
    const double lo = round_down(d.lo() - input_offset_[j]);
    const double hi = round_up(d.hi() - input_offset_[j]);
    const double s = input_scale_[j];
    if (s >= 0.0) return {round_down(lo * s), round_up(hi * s)};
    return {round_down(hi * s), round_up(lo * s)};
  }

  Interval scale_output(const Interval& t) const {
    const double s = output_scale_rad_;
    // |t| <= 1, so the rounded product never exceeds s in magnitude.
    return {std::max(round_down(t.lo() * s), -s), std::min(round_up(t.hi() * s), s)};
  }

  /// W a + b on affine forms, using dense symbol coefficients and a
  /// componentwise rounding-error bound.
  static std::vector<AffineForm> affine_layer(const Layer& l, const std::vector<AffineForm>& a) {
    using affine_detail::kUnit;
    std::vector<SymbolId> ids;
    for (const auto& f : a) {
      for (const auto& t : f.terms()) ids.push_back(t.id);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    const Eigen::Index n = static_cast<Eigen::Index>(a.size());
    const Eigen::Index m = static_cast<Eigen::Index>(ids.size());
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(n, m);
    Eigen::VectorXd center(n);
    Eigen::VectorXd err(n);
    Eigen::VectorXd mass(n);  // |center| + sum |coeff|
    for (Eigen::Index j = 0; j < n; ++j) {
      const AffineForm& f = a[static_cast<std::size_t>(j)];
      center[j] = f.center();
      err[j] = f.err();
      double s = std::fabs(f.center());
      for (const auto& t : f.terms()) {
        const auto k = std::lower_bound(ids.begin(), ids.end(), t.id) - ids.begin();
        coeffs(j, k) = t.coeff;
        s += std::fabs(t.coeff);
      }
      mass[j] = s;
    }
    const Eigen::MatrixXd w_abs = l.weights.cwiseAbs();
    const Eigen::VectorXd c_out = l.weights * center;
    const Eigen::MatrixXd a_out = l.weights * coeffs;
    // Dot products of length n carry at most gamma_n relative error; every
    // bound below is itself summed in floating point, hence the extra factor.
    const double gamma = static_cast<double>(n + 2) * kUnit / (1.0 - static_cast<double>(n + 2) * kUnit);
    const Eigen::VectorXd slack = err + gamma * mass;
    const Eigen::VectorXd e_out = w_abs * slack;
    std::vector<AffineForm> out(static_cast<std::size_t>(l.rows()));
    for (Eigen::Index i = 0; i < l.rows(); ++i) {
      const double c = c_out[i] + l.bias[i];
      std::vector<AffineForm::Term> terms;
      for (Eigen::Index k = 0; k < m; ++k) {
        if (a_out(i, k) != 0.0) terms.push_back({ids[static_cast<std::size_t>(k)], a_out(i, k)});
      }
      const double e = e_out[i] * (1.0 + 2.0 * gamma) + (std::fabs(c) + std::fabs(l.bias[i])) * 2.0 * kUnit;
      AffineForm& f = out[static_cast<std::size_t>(i)];
      f.set_center_unchecked(c);
      f.set_terms_unchecked(std::move(terms));
      f.set_err_unchecked(affine_detail::finish_bound(e + affine_detail::kTiny, static_cast<std::size_t>(n)));
    }
    return out;
  }

  using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  std::vector<Layer> layers_;
  std::vector<RowMajorMatrix> row_major_;
  double output_scale_deg_ = kMaxSteeringDeg;
  double output_scale_rad_ = deg_to_rad(kMaxSteeringDeg);
  std::vector<double> input_offset_;
  std::vector<double> input_scale_;
  bool identity_input_ = true;
};

/// First-order enclosure as a form, replaced by the interval enclosure when
/// that is more than kFlatFactor times narrower. The first-order form keeps
/// the dependence on the initial set, which matters more in closed loop than
/// a slightly wider range.
inline AffineForm steering_enclosure(const MLPController& c, std::span<const AffineForm> scan, NoiseContext& ctx) {
  std::vector<Interval> box;
  box.reserve(scan.size());
  for (const auto& f : scan) box.push_back(f.range());
  const Interval iv = c.evaluate_enclosure(box);
  AffineForm af = c.evaluate_enclosure(scan, ctx);
  if (affine_detail::kFlatFactor * iv.width() < af.range().width()) return AffineForm::from_interval(iv, ctx.fresh());
  return af;
}

// ---------------------------------------------------------------------------
// Weight files.

namespace controller_detail {

using json_detail::check_keys;
using json_detail::number_array;
using json_detail::positive_int;
using json_detail::require;

}  // namespace controller_detail

inline MLPController parse_weights(const nlohmann::json& j) {
  using namespace controller_detail;
  if (!j.is_object()) throw ParseError("weight file must be a JSON object");
  check_keys(j, {"meta", "layers"}, "weight file");
  const auto& meta = require(j, "meta", "weight file");
  if (!meta.is_object()) throw ParseError("meta must be an object");
  const int num_rays = positive_int(require(meta, "num_rays", "meta"), "meta.num_rays");
  double scale = kMaxSteeringDeg;
  if (meta.contains("output_scale_deg")) {
    if (!meta["output_scale_deg"].is_number()) throw ParseError("meta.output_scale_deg must be a number");
    scale = meta["output_scale_deg"].get<double>();
  }
  std::vector<double> offset;
  std::vector<double> in_scale;
  if (meta.contains("input_offset")) offset = number_array(meta["input_offset"], "meta.input_offset");
  if (meta.contains("input_scale")) in_scale = number_array(meta["input_scale"], "meta.input_scale");

  const auto& jl = require(j, "layers", "weight file");
  if (!jl.is_array() || jl.empty()) throw ParseError("layers must be a non-empty array");
  std::vector<Layer> layers;
  for (std::size_t k = 0; k < jl.size(); ++k) {
    const std::string where = "layers[" + std::to_string(k) + "]";
    const auto& e = jl[k];
    if (!e.is_object()) throw ParseError(where + " must be an object");
    check_keys(e, {"rows", "cols", "weights", "bias", "activation"}, where);
    const int rows = positive_int(require(e, "rows", where), where + ".rows");
    const int cols = positive_int(require(e, "cols", where), where + ".cols");
    const auto w = number_array(require(e, "weights", where), where + ".weights");
    const auto b = number_array(require(e, "bias", where), where + ".bias");
    if (w.size() != static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols)) {
      throw DimensionError(where + ".weights must have rows*cols entries");
    }
    const auto& act = require(e, "activation", where);
    if (!act.is_string()) throw ParseError(where + ".activation must be a string");
    Layer l;
    const std::string a = act.get<std::string>();
    if (a == "tanh") {
      l.activation = Activation::Tanh;
    } else if (a == "linear") {
      l.activation = Activation::Linear;
    } else {
      throw ConfigError(where + ": unsupported activation '" + a + "'");
    }
    l.weights.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r) * cols + c];
    }
    l.bias = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
    layers.push_back(std::move(l));
  }
  MLPController c(std::move(layers), scale, std::move(offset), std::move(in_scale));
  if (c.input_dim() != num_rays) {
    throw DimensionError("meta.num_rays is " + std::to_string(num_rays) + " but the first layer has " +
                         std::to_string(c.input_dim()) + " inputs");
  }
  return c;
}

inline nlohmann::json to_json(const MLPController& c) {
  nlohmann::json meta{{"num_rays", c.input_dim()},
                      {"output_scale_deg", c.output_scale_deg()},
                      {"input_offset", c.input_offset()},
                      {"input_scale", c.input_scale()}};
  nlohmann::json layers = nlohmann::json::array();
  for (const Layer& l : c.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.rows(); ++r) {
      for (Eigen::Index k = 0; k < l.cols(); ++k) w.push_back(l.weights(r, k));
    }
    layers.push_back({{"rows", l.rows()},
                      {"cols", l.cols()},
                      {"weights", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())},
                      {"activation", to_string(l.activation)}});
  }
  return {{"meta", meta}, {"layers", layers}};
}

inline MLPController load_weights(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open weight file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed weight file '" + path + "': " + e.what());
  }
  return parse_weights(j);
}

inline void save_weights(const MLPController& c, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write weight file '" + path + "'");
  out << to_json(c).dump(1) << '\n';
}

}  // namespace hallreach
