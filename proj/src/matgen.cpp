#include "vamp/matgen.hpp"

#include <Eigen/QR>
#include <Eigen/SVD>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace vamp {

namespace {

// QR with the sign of each R diagonal entry absorbed into Q, so that Q is
// Haar rather than merely orthogonal.
Matrix sign_fixed_q(const Matrix& g, Index cols) {
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(g.rows(), cols);
  const auto& rdiag = qr.matrixQR().diagonal();
  for (Index j = 0; j < cols; ++j)
    if (rdiag[j] < 0.0) q.col(j) = -q.col(j);
  return q;
}

}  // namespace

Matrix haar_orthogonal(Index n, Rng& rng) {
  if (n < 1) throw std::invalid_argument("haar_orthogonal: n must be >= 1");
  return sign_fixed_q(gaussian_matrix(n, n, rng), n);
}

Matrix haar_stiefel(Index n, Index r, Rng& rng) {
  if (n < 1 || r < 1 || r > n)
    throw std::invalid_argument("haar_stiefel: need 1 <= r <= n");
  return sign_fixed_q(gaussian_matrix(n, r, rng), r);
}

Vector geometric_spectrum(Index m, Index n, double kappa) {
  if (m < 1) throw std::invalid_argument("geometric_spectrum: m must be >= 1");
  if (!(kappa >= 1.0))
    throw std::invalid_argument("geometric_spectrum: kappa must be >= 1");
  Vector s(m);
  if (m == 1) {
    s[0] = std::sqrt(static_cast<double>(n));
    return s;
  }
  const double ratio = std::pow(kappa, -1.0 / static_cast<double>(m - 1));
  double sum_sq = 0.0;
  double rpow = 1.0;
  for (Index i = 0; i < m; ++i) {
    s[i] = rpow;
    sum_sq += rpow * rpow;
    rpow *= ratio;
  }
  s *= std::sqrt(static_cast<double>(n) / sum_sq);
  return s;
}

Vector sample_bg_signal(Index n, const BgPrior& prior, Rng& rng) {
  if (n < 1) throw std::invalid_argument("sample_bg_signal: n must be >= 1");
  prior.validate();
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, std::sqrt(prior.sigma_x2));
  Vector x = Vector::Zero(n);
  for (Index i = 0; i < n; ++i)
    if (unif(rng) < prior.rho) x[i] = normal(rng);
  return x;
}

ProblemInstance synthesize_problem(const Ensemble& ensemble, Index m, Index n,
                                   const BgPrior& prior, double snr_db,
                                   std::uint64_t seed) {
  if (m > n)
    throw std::invalid_argument("synthesize_problem: m > n unsupported");
  if (m < 1) throw std::invalid_argument("synthesize_problem: m must be >= 1");
  prior.validate();
  if (!std::isfinite(snr_db))
    throw std::invalid_argument("synthesize_problem: snr_db must be finite");

  ProblemInstance p;
  p.m = m;
  p.n = n;
  p.meta.snr_db = snr_db;
  p.meta.seed = seed;

  if (ensemble.kind == Ensemble::Kind::RotInv) {
    p.meta.ensemble = "rotinv";
    p.meta.kappa = ensemble.param;
    Rng rng_u(substream_seed(seed, 1));
    Rng rng_v(substream_seed(seed, 2));
    p.r = m;
    p.s_bar = geometric_spectrum(m, n, ensemble.param);
    p.u_bar = haar_orthogonal(m, rng_u);
    p.v_bar = haar_stiefel(n, m, rng_v);
    p.a = p.u_bar * p.s_bar.asDiagonal() * p.v_bar.transpose();
  } else {
    p.meta.ensemble = "nonzero_mean";
    p.meta.mu = ensemble.param;
    // i.i.d. N(mu, 1/m) draw, rescaled to ||A||_F^2 = n; keep resampling on
    // the (never observed in practice) event of an SVD failure.
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng_a(substream_seed(seed, 1, attempt));
      p.a = gaussian_matrix(m, n, rng_a, ensemble.param,
                            1.0 / std::sqrt(static_cast<double>(m)));
      p.a *= std::sqrt(static_cast<double>(n)) / p.a.norm();
      Eigen::BDCSVD<Matrix> svd(p.a, Eigen::ComputeThinU | Eigen::ComputeThinV);
      if (svd.info() != Eigen::Success) {
        std::fprintf(stderr,
                     "synthesize_problem: SVD failed (seed %llu attempt %llu),"
                     " resampling\n",
                     static_cast<unsigned long long>(seed),
                     static_cast<unsigned long long>(attempt));
        continue;
      }
      const Vector& sv = svd.singularValues();
      // Algorithm steps divide by s_bar; drop numerically zero directions.
      Index r = 0;
      while (r < sv.size() && sv[r] > 1e-12 * sv[0]) ++r;
      p.r = r;
      p.s_bar = sv.head(r);
      p.u_bar = svd.matrixU().leftCols(r);
      p.v_bar = svd.matrixV().leftCols(r);
      break;
    }
  }

  p.gamma_w0 = gamma_w0_for_snr(m, n, prior, snr_db);
  Rng rng_x(substream_seed(seed, 3));
  Rng rng_w(substream_seed(seed, 4));
  p.x0 = sample_bg_signal(n, prior, rng_x);
  p.w = gaussian_vector(m, rng_w, 0.0, 1.0 / std::sqrt(p.gamma_w0));
  p.y = p.a * p.x0 + p.w;
  return p;
}

namespace {

void append_array(std::ofstream& bin, nlohmann::json& arrays,
                  const std::string& name, const double* data, Index rows,
                  Index cols, std::uint64_t& offset) {
  const std::uint64_t bytes =
      static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols) * 8;
  bin.write(reinterpret_cast<const char*>(data),
            static_cast<std::streamsize>(bytes));
  arrays[name] = {{"rows", rows}, {"cols", cols}, {"offset", offset}};
  offset += bytes;
}

void read_array(std::ifstream& bin, const nlohmann::json& entry, double* data) {
  const std::uint64_t bytes = entry.at("rows").get<std::uint64_t>() *
                              entry.at("cols").get<std::uint64_t>() * 8;
  bin.seekg(static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
  bin.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(bytes));
  if (!bin) throw std::runtime_error("load_instance: truncated sidecar");
}

}  // namespace

void save_instance(const ProblemInstance& p, const std::string& json_path,
                   const std::string& bin_path) {
  std::ofstream bin(bin_path, std::ios::binary);
  if (!bin) throw std::runtime_error("save_instance: cannot open " + bin_path);
  nlohmann::json doc;
  doc["m"] = p.m;
  doc["n"] = p.n;
  doc["r"] = p.r;
  doc["gamma_w0"] = p.gamma_w0;
  doc["snr_db"] = p.meta.snr_db;
  doc["seed"] = p.meta.seed;
  doc["ensemble"] = p.meta.ensemble;
  doc["kappa"] = p.meta.kappa;
  doc["mu"] = p.meta.mu;
  doc["sidecar"] = bin_path;
  doc["layout"] = "column_major";
  doc["dtype"] = "float64_le";
  nlohmann::json arrays;
  std::uint64_t offset = 0;
  append_array(bin, arrays, "a", p.a.data(), p.m, p.n, offset);
  append_array(bin, arrays, "x0", p.x0.data(), p.n, 1, offset);
  append_array(bin, arrays, "w", p.w.data(), p.m, 1, offset);
  append_array(bin, arrays, "y", p.y.data(), p.m, 1, offset);
  append_array(bin, arrays, "u_bar", p.u_bar.data(), p.m, p.r, offset);
  append_array(bin, arrays, "s_bar", p.s_bar.data(), p.r, 1, offset);
  append_array(bin, arrays, "v_bar", p.v_bar.data(), p.n, p.r, offset);
  doc["arrays"] = arrays;
  std::ofstream js(json_path);
  if (!js) throw std::runtime_error("save_instance: cannot open " + json_path);
  js << doc.dump(2) << "\n";
}

ProblemInstance load_instance(const std::string& json_path) {
  std::ifstream js(json_path);
  if (!js) throw std::runtime_error("load_instance: cannot open " + json_path);
  nlohmann::json doc = nlohmann::json::parse(js);
  ProblemInstance p;
  p.m = doc.at("m").get<Index>();
  p.n = doc.at("n").get<Index>();
  p.r = doc.at("r").get<Index>();
  p.gamma_w0 = doc.at("gamma_w0").get<double>();
  p.meta.snr_db = doc.at("snr_db").get<double>();
  p.meta.seed = doc.at("seed").get<std::uint64_t>();
  p.meta.ensemble = doc.at("ensemble").get<std::string>();
  p.meta.kappa = doc.at("kappa").get<double>();
  p.meta.mu = doc.at("mu").get<double>();
  std::ifstream bin(doc.at("sidecar").get<std::string>(), std::ios::binary);
  if (!bin) throw std::runtime_error("load_instance: cannot open sidecar");
  const nlohmann::json& arrays = doc.at("arrays");
  p.a.resize(p.m, p.n);
  p.x0.resize(p.n);
  p.w.resize(p.m);
  p.y.resize(p.m);
  p.u_bar.resize(p.m, p.r);
  p.s_bar.resize(p.r);
  p.v_bar.resize(p.n, p.r);
  read_array(bin, arrays.at("a"), p.a.data());
  read_array(bin, arrays.at("x0"), p.x0.data());
  read_array(bin, arrays.at("w"), p.w.data());
  read_array(bin, arrays.at("y"), p.y.data());
  read_array(bin, arrays.at("u_bar"), p.u_bar.data());
  read_array(bin, arrays.at("s_bar"), p.s_bar.data());
  read_array(bin, arrays.at("v_bar"), p.v_bar.data());
  return p;
}

}  // namespace vamp
