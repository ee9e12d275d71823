#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "muonlab/matrix.hpp"

namespace muonlab {

/// Two-layer linear network ŷ = V U x with U: H × d_in and V: d_out × H.
struct DeepLinearNet {
  Matrix u;
  Matrix v;

  DeepLinearNet() = default;
  DeepLinearNet(Matrix u_weights, Matrix v_weights);

  std::size_t d_in() const { return u.cols(); }
  std::size_t hidden() const { return u.rows(); }
  std::size_t d_out() const { return v.rows(); }
};

/// Second-order data statistics Σ_xx (d_in × d_in) and Σ_yx (d_out × d_in).
struct PopulationStats {
  Matrix sigma_xx;
  Matrix sigma_yx;
};

/// Loss value and gradients with respect to U and V.
struct DlnGradients {
  double loss = 0.0;
  Matrix grad_u;
  Matrix grad_v;
};

Vector dln_forward(const DeepLinearNet& net, std::span<const double> x);

/// ∇_U L = Vᵀ(VUΣ_xx − Σ_yx), ∇_V L = (VUΣ_xx − Σ_yx)Uᵀ.
///
/// The reported loss is ½tr(WΣ_xxWᵀ) − tr(WΣ_yxᵀ), i.e. the MSE without the
/// ½E‖y‖² term, which Σ_xx and Σ_yx do not determine.
DlnGradients dln_population_grads(const DeepLinearNet& net, const PopulationStats& stats);

/// Exact sample loss (1/2n)Σ‖VUx_i − y_i‖² and its gradients; xs is n × d_in, ys is n × d_out.
DlnGradients dln_batch_loss_grads(const DeepLinearNet& net, const Matrix& xs, const Matrix& ys);

/// Σ̂_xx = XᵀX/n and Σ̂_yx = YᵀX/n.
PopulationStats empirical_stats(const Matrix& xs, const Matrix& ys);

Matrix product_map(const DeepLinearNet& net);
/// ‖VᵀV − UUᵀ‖_F
double balancedness_gap(const DeepLinearNet& net);

/// Gated routing network ŷ = W^out_o W^h W^in_j x.
struct RoutingNet {
  std::vector<Matrix> encoders;  ///< one per input source, hidden × input_dim
  std::vector<Matrix> decoders;  ///< one per output source, output_dim × hidden
  Matrix hidden;                 ///< hidden × hidden

  std::size_t sources() const { return encoders.size(); }
  std::size_t input_dim() const { return encoders.empty() ? 0 : encoders.front().cols(); }
  std::size_t output_dim() const { return decoders.empty() ? 0 : decoders.front().rows(); }
  std::size_t hidden_dim() const { return hidden.rows(); }

  /// Throws InvalidInput unless the shapes are mutually consistent.
  void validate() const;
  /// Parameters in optimizer order: encoders, decoders, hidden.
  std::vector<Matrix*> parameters();
};

struct RoutingSample {
  std::size_t in_src = 0;
  std::size_t out_src = 0;
  std::size_t number = 0;  ///< index of the encoded number
  Vector x;
  Vector y;
};

struct RoutingBatch {
  std::vector<RoutingSample> samples;
};

/// Gradients aligned with RoutingNet::parameters().
struct RoutingGradients {
  double loss = 0.0;
  std::vector<Matrix> encoders;
  std::vector<Matrix> decoders;
  Matrix hidden;

  std::vector<Matrix> flatten() const;
};

Vector routing_forward(const RoutingNet& net, std::span<const double> x, std::size_t in_src,
                       std::size_t out_src);

/// Mean over samples of ½‖ŷ − y‖². Only encoders and decoders named by a
/// sample receive gradient; the rest get exact zeros.
RoutingGradients routing_batch_grads(const RoutingNet& net, const RoutingBatch& batch);

/// Weights as a directory of matrix text files plus manifest.json listing
/// name, file, shape and role of each.
void save_model(const std::filesystem::path& dir, const DeepLinearNet& net);
void save_model(const std::filesystem::path& dir, const RoutingNet& net);
DeepLinearNet load_deep_linear(const std::filesystem::path& dir);
RoutingNet load_routing(const std::filesystem::path& dir);

}  // namespace muonlab
