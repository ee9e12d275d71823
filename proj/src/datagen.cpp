#include "muonlab/datagen.hpp"

#include <cmath>
#include <sstream>

#include "muonlab/errors.hpp"
#include "muonlab/io.hpp"
#include "muonlab/linalg.hpp"

namespace muonlab::datagen {
namespace {

// Substream ids; fixed so that adding a generator never perturbs another.
enum Stream : std::uint64_t {
  kTeacherLeft = 1,
  kTeacherRight = 2,
  kInputs = 3,
  kNoise = 4,
  kInitU = 5,
  kInitV = 6,
  kHiddenBasis = 7,
  kEncodings = 8,
  kEvalInputs = 9,
  kEvalNoise = 10,
  kLatent = 11,
  kEvalLatent = 12,
};

Matrix sqrt_diag_times(const Vector& s, const Matrix& m) {
  Matrix out = m;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) *= std::sqrt(s[i]);
  return out;
}

Matrix leading_columns(const Matrix& a, std::size_t k) {
  Matrix out(a.rows(), k);
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) out(i, j) = a(i, j);
  return out;
}

}  // namespace

Matrix gaussian_matrix(Rng& rng, std::size_t rows, std::size_t cols, double scale) {
  Matrix m(rows, cols);
  for (double& v : m.data()) v = scale * rng.normal();
  return m;
}

Matrix random_orthogonal(Rng& rng, std::size_t n) {
  // Gram-Schmidt on a Gaussian matrix is the Q factor of its QR with a
  // positive R diagonal, which is Haar distributed.
  return orthonormalize_columns(gaussian_matrix(rng, n, n));
}

RegressionData gaussian_regression(const Rng& rng, std::size_t n, std::size_t d_in, std::size_t d_out,
                                   const Vector& teacher_spectrum, double noise) {
  if (n == 0 || d_in == 0 || d_out == 0) throw InvalidInput("gaussian_regression: dimensions must be positive");
  if (teacher_spectrum.size() > std::min(d_in, d_out)) {
    throw InvalidInput("gaussian_regression: spectrum longer than min(d_in, d_out)");
  }
  if (!(noise >= 0.0)) throw InvalidInput("gaussian_regression: noise must be non-negative");
  for (double s : teacher_spectrum)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidInput("gaussian_regression: spectrum must be non-negative");

  Rng left = rng.substream(kTeacherLeft);
  Rng right = rng.substream(kTeacherRight);
  const Matrix q = random_orthogonal(left, d_out);
  const Matrix r = random_orthogonal(right, d_in);
  const std::size_t rank = teacher_spectrum.size();
  Matrix teacher(d_out, d_in);
  for (std::size_t k = 0; k < rank; ++k) {
    for (std::size_t i = 0; i < d_out; ++i)
      for (std::size_t j = 0; j < d_in; ++j) teacher(i, j) += teacher_spectrum[k] * q(i, k) * r(j, k);
  }

  RegressionData out;
  Rng inputs = rng.substream(kInputs);
  Rng noise_rng = rng.substream(kNoise);
  out.xs = gaussian_matrix(inputs, n, d_in);
  out.ys = multiply_transpose(out.xs, teacher);
  if (noise > 0.0) out.ys += gaussian_matrix(noise_rng, n, d_out, noise);
  out.teacher = teacher;
  out.population = {Matrix::identity(d_in), teacher};
  return out;
}

DeepLinearNet balanced_small_init(const Rng& rng, std::size_t d_in, std::size_t hidden, std::size_t d_out,
                                  double scale, bool exact_balance) {
  if (!(scale > 0.0)) throw InvalidInput("balanced_small_init: scale must be positive");
  if (d_in == 0 || hidden == 0 || d_out == 0) throw InvalidInput("balanced_small_init: dimensions must be positive");
  Rng ru = rng.substream(kInitU);
  Rng rv = rng.substream(kInitV);
  DeepLinearNet net(gaussian_matrix(ru, hidden, d_in, scale), gaussian_matrix(rv, d_out, hidden, scale));
  if (!exact_balance) return net;

  const SvdResult w = svd_compact(product_map(net));
  const std::size_t r = w.rank();
  if (r == 0) return net;
  Matrix z = orthogonalize_exact(net.u * w.vt.transpose());  // H × r polar factor
  if (svd_compact(z).rank() < r) {
    Rng rz = rng.substream(kHiddenBasis);
    z = orthonormalize_columns(gaussian_matrix(rz, hidden, r));
  }
  net.u = z * sqrt_diag_times(w.s, w.vt);
  net.v = w.u * sqrt_diag_times(w.s, z.transpose());
  return net;
}

DeepLinearNet aligned_small_init(const Rng& rng, const Matrix& sigma_yx, std::size_t hidden, double sigma0) {
  if (!(sigma0 > 0.0)) throw InvalidInput("aligned_small_init: sigma0 must be positive");
  const SvdResult svd = svd_compact(sigma_yx);
  const std::size_t r = svd.rank();
  if (r == 0) throw InvalidInput("aligned_small_init: Σ_yx is zero");
  if (hidden < r) throw InvalidInput("aligned_small_init: hidden width below rank of Σ_yx");
  Rng rz = rng.substream(kHiddenBasis);
  const Matrix z = leading_columns(random_orthogonal(rz, hidden), r);
  const double a = std::sqrt(sigma0);
  return DeepLinearNet((z * svd.vt) * a, multiply_transpose(svd.u, z) * a);
}

std::vector<Matrix> make_source_encodings(const Rng& rng, std::size_t sources, std::size_t numbers,
                                          std::size_t dim) {
  if (numbers > dim) throw InvalidInput("make_source_encodings: more numbers than encoding dimensions");
  if (sources == 0 || numbers == 0) throw InvalidInput("make_source_encodings: counts must be positive");
  Rng base = rng.substream(kEncodings);
  std::vector<Matrix> out;
  for (std::size_t j = 0; j < sources; ++j) {
    Rng r = base.substream(j);
    out.push_back(orthonormalize_columns(gaussian_matrix(r, dim, numbers)));
  }
  return out;
}

std::vector<Vector> default_routing_targets() {
  return {
      {1, 0, 0, 0, 1, 0, 0},
      {0, 1, 0, 0, 1, 1, 0},
      {0, 0, 1, 0, 0, 1, 1},
      {0, 0, 0, 1, 0, 0, 1},
  };
}

bool is_trained_pair(std::size_t in_src, std::size_t out_src, std::size_t sources, std::size_t shifts) {
  return (out_src + sources - in_src) % sources < shifts;
}

RoutingBatch routing_sample_batch(Rng& rng, std::size_t sources, std::size_t shifts, std::size_t numbers,
                                  const std::vector<Matrix>& encodings, const std::vector<Vector>& targets) {
  if (sources == 0 || shifts == 0 || numbers == 0) throw InvalidInput("routing batch: counts must be positive");
  if (shifts > sources) throw InvalidInput("routing batch: more shifts than sources");
  if (encodings.size() != sources) throw InvalidInput("routing batch: need one encoding set per source");
  if (targets.size() != numbers) throw InvalidInput("routing batch: need one target per number");
  for (const auto& e : encodings) {
    if (e.cols() != numbers) throw InvalidInput("routing batch: encoding set has wrong size");
    const Matrix gram = transpose_multiply(e, e);
    if (max_abs_difference(gram, Matrix::identity(numbers)) > 1e-9) {
      throw InvalidInput("routing batch: encodings are not orthonormal");
    }
  }
  RoutingBatch batch;
  batch.samples.reserve(sources * shifts);
  for (std::size_t j = 0; j < sources; ++j) {
    for (std::size_t s = 0; s < shifts; ++s) {
      RoutingSample sample;
      sample.in_src = j;
      sample.out_src = (j + s) % sources;
      sample.number = rng.uniform_index(numbers);
      sample.x = encodings[j].column(sample.number);
      sample.y = targets[sample.number];
      batch.samples.push_back(std::move(sample));
    }
  }
  return batch;
}

void SpuriousSpec::validate() const {
  if (!(core_strength > 0.0)) throw InvalidInput("spurious spec: core_strength must be positive");
  if (!(spurious_strength >= 0.0)) throw InvalidInput("spurious spec: spurious_strength must be non-negative");
  if (!(noise_level >= 0.0)) throw InvalidInput("spurious spec: noise_level must be non-negative");
  if (d_in < 2) throw InvalidInput("spurious spec: d_in must be at least 2");
  if (d_out < 2) throw InvalidInput("spurious spec: d_out must be at least 2");
}

namespace {

struct SpuriousDirections {
  Vector core_in;   // unit vector on coordinates 0..d_in-2
  Vector core_out;  // q_c
  Vector spur_out;  // q_s, orthogonal to q_c
};

void fill_spurious(Rng& inputs, Rng& latent, Rng& noise, const SpuriousSpec& spec, const SpuriousDirections& dir,
                   std::size_t n, Matrix& xs, Matrix& ys) {
  xs = Matrix(n, spec.d_in);
  ys = Matrix(n, spec.d_out);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = xs.row(i);
    for (std::size_t j = 0; j + 1 < spec.d_in; ++j) x[j] = inputs.normal();
    const double zeta = latent.normal();
    x[spec.d_in - 1] = spec.spurious_strength * zeta;
    const double core_signal = spec.core_strength * dot(x.first(spec.d_in - 1), dir.core_in);
    auto y = ys.row(i);
    for (std::size_t o = 0; o < spec.d_out; ++o) {
      y[o] = core_signal * dir.core_out[o] + zeta * dir.spur_out[o];
      if (spec.noise_level > 0.0) y[o] += spec.noise_level * noise.normal();
    }
  }
}

}  // namespace

SpuriousData spurious_dataset(const Rng& rng, const SpuriousSpec& spec, std::size_t n, std::size_t n_eval) {
  spec.validate();
  if (n == 0 || n_eval == 0) throw InvalidInput("spurious dataset: sample counts must be positive");
  Rng left = rng.substream(kTeacherLeft);
  Rng right = rng.substream(kTeacherRight);
  const Matrix q = random_orthogonal(left, spec.d_out);
  SpuriousDirections dir;
  dir.core_out = q.column(0);
  dir.spur_out = q.column(1);
  Vector rc(spec.d_in - 1);
  for (double& v : rc) v = right.normal();
  const double nrm = norm2(rc);
  for (double& v : rc) v /= nrm;
  dir.core_in = rc;

  SpuriousData out;
  Rng in_train = rng.substream(kInputs);
  Rng lat_train = rng.substream(kLatent);
  Rng noise_train = rng.substream(kNoise);
  fill_spurious(in_train, lat_train, noise_train, spec, dir, n, out.xs, out.ys);
  Rng in_eval = rng.substream(kEvalInputs);
  Rng lat_eval = rng.substream(kEvalLatent);
  Rng noise_eval = rng.substream(kEvalNoise);
  fill_spurious(in_eval, lat_eval, noise_eval, spec, dir, n_eval, out.eval_xs_with, out.eval_ys);
  out.eval_xs_without = out.eval_xs_with;
  for (std::size_t i = 0; i < n_eval; ++i) out.eval_xs_without(i, spec.d_in - 1) = 0.0;

  out.teacher = Matrix(spec.d_out, spec.d_in);
  for (std::size_t o = 0; o < spec.d_out; ++o) {
    for (std::size_t j = 0; j + 1 < spec.d_in; ++j) out.teacher(o, j) = spec.core_strength * dir.core_out[o] * rc[j];
    out.teacher(o, spec.d_in - 1) = spec.spurious_strength * dir.spur_out[o];
  }
  out.core_output = dir.core_out;
  return out;
}

void write_regression_csv(const std::filesystem::path& path, const Matrix& xs, const Matrix& ys) {
  if (xs.rows() != ys.rows()) throw InvalidInput("write_regression_csv: row count mismatch");
  std::ostringstream out;
  for (std::size_t j = 0; j < xs.cols(); ++j) out << (j ? "," : "") << "x" << j;
  for (std::size_t j = 0; j < ys.cols(); ++j) out << ",y" << j;
  out << '\n';
  for (std::size_t i = 0; i < xs.rows(); ++i) {
    for (std::size_t j = 0; j < xs.cols(); ++j) out << (j ? "," : "") << io::format_double(xs(i, j));
    for (std::size_t j = 0; j < ys.cols(); ++j) out << ',' << io::format_double(ys(i, j));
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

void write_routing_csv(const std::filesystem::path& path, const RoutingBatch& batch) {
  std::ostringstream out;
  out << "j,o,number";
  if (!batch.samples.empty()) {
    for (std::size_t k = 0; k < batch.samples.front().x.size(); ++k) out << ",x" << k;
    for (std::size_t k = 0; k < batch.samples.front().y.size(); ++k) out << ",y" << k;
  }
  out << '\n';
  for (const auto& s : batch.samples) {
    out << s.in_src << ',' << s.out_src << ',' << s.number;
    for (double v : s.x) out << ',' << io::format_double(v);
    for (double v : s.y) out << ',' << io::format_double(v);
    out << '\n';
  }
  io::write_atomic(path, out.str());
}

}  // namespace muonlab::datagen
