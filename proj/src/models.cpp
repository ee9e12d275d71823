#include "muonlab/models.hpp"

#include "json.hpp"

#include "muonlab/errors.hpp"
#include "muonlab/io.hpp"
#include "muonlab/linalg.hpp"

namespace muonlab {

DeepLinearNet::DeepLinearNet(Matrix u_weights, Matrix v_weights) : u(std::move(u_weights)), v(std::move(v_weights)) {
  if (v.cols() != u.rows()) {
    throw InvalidInput("deep linear net: V is " + v.shape_string() + " but U is " + u.shape_string());
  }
}

Vector dln_forward(const DeepLinearNet& net, std::span<const double> x) {
  if (x.size() != net.d_in()) throw InvalidInput("dln_forward: input has wrong dimension");
  const Vector h = net.u * x;
  return net.v * h;
}

DlnGradients dln_population_grads(const DeepLinearNet& net, const PopulationStats& stats) {
  if (net.v.cols() != net.u.rows()) throw InvalidInput("dln_population_grads: inconsistent layer shapes");
  if (stats.sigma_xx.rows() != net.d_in() || stats.sigma_xx.cols() != net.d_in() ||
      stats.sigma_yx.rows() != net.d_out() || stats.sigma_yx.cols() != net.d_in()) {
    throw InvalidInput("dln_population_grads: statistics do not match network dimensions");
  }
  const Matrix w = net.v * net.u;
  const Matrix w_sxx = w * stats.sigma_xx;
  const Matrix residual = w_sxx - stats.sigma_yx;
  DlnGradients g;
  g.grad_u = transpose_multiply(net.v, residual);
  g.grad_v = multiply_transpose(residual, net.u);
  g.loss = 0.5 * inner(w_sxx, w) - inner(w, stats.sigma_yx);
  return g;
}

DlnGradients dln_batch_loss_grads(const DeepLinearNet& net, const Matrix& xs, const Matrix& ys) {
  if (xs.rows() == 0) throw InvalidInput("dln_batch_loss_grads: empty batch");
  if (xs.rows() != ys.rows() || xs.cols() != net.d_in() || ys.cols() != net.d_out()) {
    throw InvalidInput("dln_batch_loss_grads: batch shape does not match network");
  }
  const double n = static_cast<double>(xs.rows());
  const Matrix hidden = multiply_transpose(xs, net.u);          // n × H
  Matrix residual = multiply_transpose(hidden, net.v);          // n × d_out
  residual -= ys;
  DlnGradients g;
  g.loss = 0.5 * inner(residual, residual) / n;
  // ∇_V = Rᵀ H / n, ∇_U = Vᵀ Rᵀ X / n
  g.grad_v = transpose_multiply(residual, hidden) * (1.0 / n);
  const Matrix back = residual * net.v;                          // n × H
  g.grad_u = transpose_multiply(back, xs) * (1.0 / n);
  return g;
}

PopulationStats empirical_stats(const Matrix& xs, const Matrix& ys) {
  if (xs.rows() == 0 || xs.rows() != ys.rows()) throw InvalidInput("empirical_stats: bad sample matrices");
  const double inv_n = 1.0 / static_cast<double>(xs.rows());
  return {transpose_multiply(xs, xs) * inv_n, transpose_multiply(ys, xs) * inv_n};
}

Matrix product_map(const DeepLinearNet& net) { return net.v * net.u; }

double balancedness_gap(const DeepLinearNet& net) {
  const Matrix vtv = transpose_multiply(net.v, net.v);
  const Matrix uut = multiply_transpose(net.u, net.u);
  return frobenius_norm(vtv - uut);
}

void RoutingNet::validate() const {
  if (encoders.empty() || decoders.size() != encoders.size()) {
    throw InvalidInput("routing net: need one encoder and one decoder per source");
  }
  const std::size_t h = hidden.rows();
  if (hidden.cols() != h) throw InvalidInput("routing net: hidden layer must be square");
  for (const auto& e : encoders) {
    if (!e.same_shape(encoders.front()) || e.rows() != h) throw InvalidInput("routing net: encoder shape mismatch");
  }
  for (const auto& d : decoders) {
    if (!d.same_shape(decoders.front()) || d.cols() != h) throw InvalidInput("routing net: decoder shape mismatch");
  }
}

std::vector<Matrix*> RoutingNet::parameters() {
  std::vector<Matrix*> out;
  for (auto& e : encoders) out.push_back(&e);
  for (auto& d : decoders) out.push_back(&d);
  out.push_back(&hidden);
  return out;
}

std::vector<Matrix> RoutingGradients::flatten() const {
  std::vector<Matrix> out(encoders);
  out.insert(out.end(), decoders.begin(), decoders.end());
  out.push_back(hidden);
  return out;
}

Vector routing_forward(const RoutingNet& net, std::span<const double> x, std::size_t in_src,
                       std::size_t out_src) {
  if (in_src >= net.sources() || out_src >= net.sources()) {
    throw InvalidInput("routing_forward: source index out of range");
  }
  if (x.size() != net.input_dim()) throw InvalidInput("routing_forward: input has wrong dimension");
  const Vector h1 = net.encoders[in_src] * x;
  const Vector h2 = net.hidden * h1;
  return net.decoders[out_src] * h2;
}

RoutingGradients routing_batch_grads(const RoutingNet& net, const RoutingBatch& batch) {
  if (batch.samples.empty()) throw InvalidInput("routing_batch_grads: empty batch");
  RoutingGradients g;
  for (const auto& e : net.encoders) g.encoders.emplace_back(e.rows(), e.cols());
  for (const auto& d : net.decoders) g.decoders.emplace_back(d.rows(), d.cols());
  g.hidden = Matrix(net.hidden.rows(), net.hidden.cols());
  const double inv_n = 1.0 / static_cast<double>(batch.samples.size());

  for (const auto& s : batch.samples) {
    if (s.in_src >= net.sources() || s.out_src >= net.sources()) {
      throw InvalidInput("routing_batch_grads: source index out of range");
    }
    if (s.x.size() != net.input_dim() || s.y.size() != net.output_dim()) {
      throw InvalidInput("routing_batch_grads: sample has wrong dimensions");
    }
    const Matrix& enc = net.encoders[s.in_src];
    const Matrix& dec = net.decoders[s.out_src];
    const Vector h1 = enc * s.x;
    const Vector h2 = net.hidden * h1;
    Vector r = dec * h2;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] -= s.y[i];
    g.loss += 0.5 * dot(r, r) * inv_n;
    for (double& v : r) v *= inv_n;

    // δ2 = decᵀ r, δ1 = W_hᵀ δ2
    Vector d2(dec.cols(), 0.0);
    for (std::size_t i = 0; i < dec.rows(); ++i) {
      const auto row = dec.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) d2[j] += row[j] * r[i];
    }
    Vector d1(net.hidden.cols(), 0.0);
    for (std::size_t i = 0; i < net.hidden.rows(); ++i) {
      const auto row = net.hidden.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) d1[j] += row[j] * d2[i];
    }
    g.decoders[s.out_src] += Matrix::outer(r, h2);
    g.hidden += Matrix::outer(d2, h1);
    g.encoders[s.in_src] += Matrix::outer(d1, s.x);
  }
  return g;
}

namespace {

struct ManifestEntry {
  std::string name;
  std::string role;
  const Matrix* matrix;
};

void write_manifest(const std::filesystem::path& dir, const std::string& kind,
                    const std::vector<ManifestEntry>& entries) {
  nlohmann::json manifest;
  manifest["model"] = kind;
  manifest["matrices"] = nlohmann::json::array();
  for (const auto& e : entries) {
    const std::string file = e.name + ".mat";
    save_matrix((dir / file).string(), *e.matrix);
    manifest["matrices"].push_back(
        {{"name", e.name}, {"file", file}, {"rows", e.matrix->rows()}, {"cols", e.matrix->cols()}, {"role", e.role}});
  }
  io::write_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

nlohmann::json read_manifest(const std::filesystem::path& dir, const std::string& kind) {
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw InvalidInput("model manifest: " + std::string(e.what()));
  }
  if (m.value("model", "") != kind) throw InvalidInput("model manifest: expected model '" + kind + "'");
  return m;
}

Matrix load_entry(const std::filesystem::path& dir, const nlohmann::json& entry) {
  Matrix a = load_matrix((dir / entry.at("file").get<std::string>()).string());
  if (a.rows() != entry.at("rows").get<std::size_t>() || a.cols() != entry.at("cols").get<std::size_t>()) {
    throw InvalidInput("model manifest: shape of '" + entry.at("name").get<std::string>() +
                       "' does not match its file");
  }
  return a;
}

}  // namespace

void save_model(const std::filesystem::path& dir, const DeepLinearNet& net) {
  write_manifest(dir, "deep_linear", {{"U", "input_layer", &net.u}, {"V", "output_layer", &net.v}});
}

void save_model(const std::filesystem::path& dir, const RoutingNet& net) {
  std::vector<ManifestEntry> entries;
  for (std::size_t j = 0; j < net.encoders.size(); ++j)
    entries.push_back({"encoder_" + std::to_string(j), "encoder", &net.encoders[j]});
  for (std::size_t o = 0; o < net.decoders.size(); ++o)
    entries.push_back({"decoder_" + std::to_string(o), "decoder", &net.decoders[o]});
  entries.push_back({"hidden", "hidden", &net.hidden});
  write_manifest(dir, "routing", entries);
}

DeepLinearNet load_deep_linear(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir, "deep_linear");
  Matrix u;
  Matrix v;
  for (const auto& e : m.at("matrices")) {
    const auto role = e.at("role").get<std::string>();
    if (role == "input_layer") u = load_entry(dir, e);
    else if (role == "output_layer") v = load_entry(dir, e);
    else throw InvalidInput("model manifest: unknown role '" + role + "'");
  }
  return DeepLinearNet(std::move(u), std::move(v));
}

RoutingNet load_routing(const std::filesystem::path& dir) {
  const auto m = read_manifest(dir, "routing");
  RoutingNet net;
  for (const auto& e : m.at("matrices")) {
    const auto role = e.at("role").get<std::string>();
    if (role == "encoder") net.encoders.push_back(load_entry(dir, e));
    else if (role == "decoder") net.decoders.push_back(load_entry(dir, e));
    else if (role == "hidden") net.hidden = load_entry(dir, e);
    else throw InvalidInput("model manifest: unknown role '" + role + "'");
  }
  net.validate();
  return net;
}

}  // namespace muonlab
