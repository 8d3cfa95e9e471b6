// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pmclust/core.hpp"
#include "pmclust/relabel.hpp"
#include "pmclust/selection.hpp"

namespace pmclust::io {

using json = nlohmann::ordered_json;

inline constexpr const char* kChainFormat = "pmclust-chain";
inline constexpr int kChainVersion = 1;

// ---------------------------------------------------------------------------
// CSV ingestion

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t p = 0; p < line.size(); ++p) {
    const char c = line[p];
    if (quoted) {
      if (c == '"' && p + 1 < line.size() && line[p + 1] == '"') {
        cur += '"';
        ++p;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

inline std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

}  // namespace detail

/// Parses a count table: header "<id column>,<feature>,...", then one row
/// per unit with its id and J nonnegative integers. `source` names the
/// input in error messages.
inline CountMatrix parse_csv(std::istream& in, const std::string& source = "<input>") {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::trim(line).empty()) continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.size() < 2) {
    throw ValidationError(source + ": header needs an id column and at least one feature");
  }
  std::vector<std::string> features;
  for (std::size_t c = 1; c < header.size(); ++c) features.push_back(detail::trim(header[c]));
  const std::size_t n_features = features.size();

  std::vector<std::string> ids;
  std::vector<std::int64_t> values;
  std::unordered_map<std::string, std::size_t> seen;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != n_features + 1) {
      throw ValidationError(pmclust::detail::concat(source, ":", line_no, ": expected ",
                                                    n_features + 1, " fields, got ", cells.size()));
    }
    std::string id = detail::trim(cells[0]);
    if (auto [it, inserted] = seen.emplace(id, line_no); !inserted) {
      throw ValidationError(pmclust::detail::concat(source, ":", line_no, ": duplicate unit id '",
                                                    id, "' (first seen on line ", it->second, ")"));
    }
    for (std::size_t c = 1; c < cells.size(); ++c) {
      const std::string cell = detail::trim(cells[c]);
      std::int64_t v = 0;
      const auto* first = cell.data();
      const auto* last = cell.data() + cell.size();
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (cell.empty() || ec != std::errc{} || ptr != last || v < 0) {
        throw ValidationError(pmclust::detail::concat(source, ":", line_no, ", column ", c + 1,
                                                      " (", features[c - 1], "): '", cell,
                                                      "' is not a nonnegative integer"));
      }
      values.push_back(v);
    }
    ids.push_back(std::move(id));
  }
  if (ids.empty()) throw ValidationError(source + ": no data rows");
  Matrix<std::int64_t> raw(ids.size(), n_features);
  std::copy(values.begin(), values.end(), raw.data().begin());
  return validate_counts(std::move(raw), std::move(ids), std::move(features));
}

inline CountMatrix load_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  return parse_csv(in, path.string());
}

inline void write_csv(std::ostream& os, const CountMatrix& x, const std::string& id_column = "id") {
  os << id_column;
  for (const auto& f : x.feature_names()) os << ',' << f;
  os << '\n';
  for (std::size_t i = 0; i < x.n_units(); ++i) {
    os << x.unit_ids()[i];
    for (auto v : x.row(i)) os << ',' << v;
    os << '\n';
  }
}

/// Writes via a sibling temporary file and renames it into place.
template <class Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    writer(out);
    out.flush();
    if (!out) throw ValidationError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Chain persistence: JSON lines, one metadata record then one record per draw.

namespace detail {

inline json matrix_to_json(const Matrix<double>& m) {
  json rows = json::array();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    rows.push_back(std::vector<double>(m.row(r).begin(), m.row(r).end()));
  }
  return rows;
}

inline Matrix<double> matrix_from_json(const json& j, std::size_t rows, std::size_t cols,
                                       const char* what) {
  if (!j.is_array() || j.size() != rows) {
    throw ValidationError(pmclust::detail::concat("chain draw field '", what, "' must have ", rows,
                                                  " rows"));
  }
  Matrix<double> m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw ValidationError(pmclust::detail::concat("chain draw field '", what, "' row ", r + 1,
                                                    " must have ", cols, " entries"));
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

inline json metadata_to_json(const Chain& chain) {
  const auto& h = chain.spec.hyper;
  return json{{"format", kChainFormat},
              {"version", kChainVersion},
              {"model", to_string(chain.spec.kind)},
              {"k", chain.spec.k},
              {"n_units", chain.n_units},
              {"n_features", chain.n_features},
              {"seed", chain.seed},
              {"hyper",
               {{"alpha", h.alpha}, {"beta", h.beta}, {"a", h.a}, {"b", h.b}, {"gamma_mix", h.gamma_mix}}},
              {"pm_form", to_string(chain.spec.pm_form)},
              {"n_iterations", chain.n_iterations},
              {"burn_in", chain.burn_in},
              {"thin", chain.thin},
              {"n_draws", chain.draws.size()},
              {"acceptance_rates", chain.acceptance_rates}};
}

inline json draw_to_json(const ChainDraw& d) {
  json out{{"iteration", d.iteration},
           {"log_posterior", d.log_posterior},
           {"lambda", matrix_to_json(d.lambda.matrix())}};
  if (!d.tau.empty()) {
    out["tau"] = matrix_to_json(d.tau);
    out["delta"] = d.delta;
  } else {
    out["pi"] = d.pi;
    std::vector<std::size_t> labels(d.z.size());
    for (std::size_t i = 0; i < d.z.size(); ++i) labels[i] = d.z[i] + 1;
    out["z"] = labels;
  }
  return out;
}

}  // namespace detail

inline void write_chain(std::ostream& os, const Chain& chain) {
  os << detail::metadata_to_json(chain).dump() << '\n';
  for (const auto& d : chain.draws) os << detail::draw_to_json(d).dump() << '\n';
}

inline void save_chain(const Chain& chain, const std::filesystem::path& path) {
  write_atomically(path, [&](std::ostream& os) { write_chain(os, chain); });
}

inline Chain read_chain(std::istream& in, const std::string& source = "<chain>") {
  auto fail = [&](const std::string& msg) -> ValidationError {
    return ValidationError(source + ": " + msg);
  };
  std::string line;
  if (!std::getline(in, line)) throw fail("empty chain file");
  Chain chain;
  std::size_t n_draws = 0;
  try {
    const json meta = json::parse(line);
    if (meta.value("format", std::string{}) != kChainFormat) throw fail("not a chain file");
    if (meta.at("version").get<int>() != kChainVersion) {
      throw fail(pmclust::detail::concat("unsupported chain format version ",
                                         meta.at("version").get<int>(), " (expected ",
                                         kChainVersion, ")"));
    }
    chain.spec.kind = parse_model_kind(meta.at("model").get<std::string>());
    chain.spec.k = meta.at("k").get<std::size_t>();
    const auto& h = meta.at("hyper");
    chain.spec.hyper = Hyperparams{h.at("alpha").get<double>(), h.at("beta").get<double>(),
                                   h.at("a").get<double>(), h.at("b").get<double>(),
                                   h.at("gamma_mix").get<double>()};
    chain.spec.pm_form = parse_pm_form(meta.value("pm_form", std::string("blended")));
    chain.n_units = meta.at("n_units").get<std::size_t>();
    chain.n_features = meta.at("n_features").get<std::size_t>();
    chain.seed = meta.at("seed").get<std::uint64_t>();
    chain.n_iterations = meta.at("n_iterations").get<std::int64_t>();
    chain.burn_in = meta.at("burn_in").get<std::int64_t>();
    chain.thin = meta.at("thin").get<std::int64_t>();
    n_draws = meta.at("n_draws").get<std::size_t>();
    chain.acceptance_rates = meta.at("acceptance_rates").get<std::map<std::string, double>>();
  } catch (const json::exception& e) {
    throw fail(std::string("bad metadata record: ") + e.what());
  }

  const std::size_t k = chain.spec.k;
  const bool memberships = has_memberships(chain.spec.kind);
  chain.draws.reserve(n_draws);
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      ChainDraw d;
      d.iteration = j.at("iteration").get<std::int64_t>();
      d.log_posterior = j.at("log_posterior").get<double>();
      d.lambda = RateMatrix(detail::matrix_from_json(j.at("lambda"), k, chain.n_features, "lambda"));
      if (memberships) {
        d.tau = detail::matrix_from_json(j.at("tau"), chain.n_units, k, "tau");
        d.delta = j.at("delta").get<std::vector<double>>();
      } else {
        d.pi = j.at("pi").get<std::vector<double>>();
        const auto labels = j.at("z").get<std::vector<std::size_t>>();
        d.z.resize(labels.size());
        for (std::size_t i = 0; i < labels.size(); ++i) {
          if (labels[i] < 1 || labels[i] > k) throw fail("label out of range");
          d.z[i] = labels[i] - 1;
        }
      }
      chain.draws.push_back(std::move(d));
    } catch (const json::exception& e) {
      throw fail(pmclust::detail::concat("line ", line_no, ": ", e.what()));
    } catch (const DomainError& e) {
      throw fail(pmclust::detail::concat("line ", line_no, ": ", e.what()));
    }
  }
  if (chain.draws.size() != n_draws) {
    throw fail(pmclust::detail::concat("truncated chain: expected ", n_draws, " draws, found ",
                                       chain.draws.size()));
  }
  try {
    chain.validate();
  } catch (const ValidationError& e) {
    throw fail(e.what());
  }
  return chain;
}

inline Chain load_chain(const std::filesystem::path& path,
                        std::optional<ModelKind> expected = std::nullopt) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  Chain chain = read_chain(in, path.string());
  if (expected && chain.spec.kind != *expected) {
    throw ValidationError(pmclust::detail::concat(path.string(), ": chain holds a '",
                                                  to_string(chain.spec.kind),
                                                  "' model, expected '", to_string(*expected),
                                                  "'"));
  }
  return chain;
}

// ---------------------------------------------------------------------------
// Reports

struct ReportOptions {
  double archetype_threshold = kDefaultArchetypeThreshold;
  WaicMode waic_mode = WaicMode::Marginal;
  int mc_draws = 100;
  MmMarginal mm_variant = MmMarginal::TauAndZ;
  std::uint64_t seed = 0;
  std::optional<ModelKind> expected_kind;
};

struct RelabelInfo {
  std::string method = "pivot-assignment on log rates";
  std::size_t pivot_index = 0;
  int sweeps = 0;
  bool converged = false;
};

struct ReportDocument {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::int64_t n_iterations = 0, burn_in = 0, thin = 0;
  std::size_t n_draws = 0;
  std::vector<std::string> unit_ids;
  std::vector<std::string> feature_names;
  Matrix<double> rate_means;        // K x J
  Matrix<double> membership_means;  // N x K
  std::vector<double> concentration_means;
  std::optional<ArchetypeReport> archetypes;
  WaicMode waic_mode = WaicMode::Marginal;
  int mc_draws = 0;
  std::string mm_variant;
  WaicResult waic;
  RelabelInfo relabel;
  std::map<std::string, double> acceptance_rates;
  bool single_draw_warning = false;
};

inline ReportDocument make_report(const Chain& chain, const CountMatrix& x,
                                  const ReportOptions& opts = {}) {
  if (opts.expected_kind && *opts.expected_kind != chain.spec.kind) {
    throw ValidationError(pmclust::detail::concat("chain holds a '", to_string(chain.spec.kind),
                                                  "' model, expected '",
                                                  to_string(*opts.expected_kind), "'"));
  }
  require_compatible(chain, x);
  const RelabeledChain relabeled = relabel_chain(chain);

  ReportDocument doc;
  doc.spec = chain.spec;
  doc.seed = chain.seed;
  doc.n_iterations = chain.n_iterations;
  doc.burn_in = chain.burn_in;
  doc.thin = chain.thin;
  doc.n_draws = chain.draws.size();
  doc.unit_ids = x.unit_ids();
  doc.feature_names = x.feature_names();
  doc.rate_means = posterior_mean_rates(relabeled.chain);
  doc.membership_means = posterior_mean_memberships(relabeled.chain);
  doc.concentration_means = posterior_mean_concentration(relabeled.chain);
  if (has_memberships(chain.spec.kind)) {
    doc.archetypes = archetypes(relabeled, opts.archetype_threshold, x.unit_ids());
  }
  doc.waic_mode = opts.waic_mode;
  if (opts.waic_mode == WaicMode::Conditional) {
    doc.waic = waic(pointwise_conditional(relabeled.chain, x));
  } else {
    RandomSource rng(opts.seed);
    doc.mc_draws = opts.mc_draws;
    doc.waic = waic(pointwise_marginal(relabeled.chain, x, opts.mc_draws, rng, opts.mm_variant));
    if (chain.spec.kind == ModelKind::MM) doc.mm_variant = std::string(to_string(opts.mm_variant));
  }
  doc.relabel = RelabelInfo{RelabelInfo{}.method, relabeled.pivot_index, relabeled.sweeps,
                            relabeled.converged};
  doc.acceptance_rates = chain.acceptance_rates;
  doc.single_draw_warning = chain.draws.size() == 1;
  return doc;
}

inline json report_to_json(const ReportDocument& doc) {
  const auto& h = doc.spec.hyper;
  const std::size_t k = doc.spec.k;
  json profiles = json::array();
  for (std::size_t c = 0; c < k; ++c) {
    json rates = json::object();
    for (std::size_t j = 0; j < doc.feature_names.size(); ++j) {
      rates[doc.feature_names[j]] = doc.rate_means(c, j);
    }
    profiles.push_back({{"cluster", c + 1}, {"rates", rates}});
  }
  json units = json::array();
  for (std::size_t i = 0; i < doc.unit_ids.size(); ++i) {
    const auto row = doc.membership_means.row(i);
    units.push_back({{"unit_id", doc.unit_ids[i]},
                     {"membership", std::vector<double>(row.begin(), row.end())}});
  }
  json arche = nullptr;
  if (doc.archetypes) {
    arche = json{{"threshold", doc.archetypes->threshold}, {"clusters", json::array()}};
    for (std::size_t c = 0; c < doc.archetypes->clusters.size(); ++c) {
      const auto& a = doc.archetypes->clusters[c];
      arche["clusters"].push_back(
          a ? json{{"cluster", c + 1}, {"unit_id", a->unit_id}, {"membership", a->membership}}
            : json{{"cluster", c + 1}, {"unit_id", nullptr}, {"membership", nullptr}});
    }
  }
  json waic_json{{"mode", to_string(doc.waic_mode)},
                 {"lppd", doc.waic.lppd},
                 {"p_waic", doc.waic.p_waic},
                 {"waic", doc.waic.waic}};
  if (doc.waic_mode == WaicMode::Marginal) waic_json["mc_draws"] = doc.mc_draws;
  if (!doc.mm_variant.empty()) waic_json["mm_marginalization"] = doc.mm_variant;

  return json{
      {"model",
       {{"kind", to_string(doc.spec.kind)},
        {"k", k},
        {"seed", doc.seed},
        {"pm_form", to_string(doc.spec.pm_form)},
        {"hyper",
         {{"alpha", h.alpha}, {"beta", h.beta}, {"a", h.a}, {"b", h.b}, {"gamma_mix", h.gamma_mix}}},
        {"n_iterations", doc.n_iterations},
        {"burn_in", doc.burn_in},
        {"thin", doc.thin},
        {"n_draws", doc.n_draws},
        {"acceptance_rates", doc.acceptance_rates}}},
      {"profiles", profiles},
      {has_memberships(doc.spec.kind) ? "delta_mean" : "pi_mean", doc.concentration_means},
      {has_memberships(doc.spec.kind) ? "memberships" : "assignment_probabilities", units},
      {"archetypes", arche},
      {"waic", waic_json},
      {"relabeling",
       {{"method", doc.relabel.method},
        {"pivot_draw", doc.relabel.pivot_index + 1},
        {"sweeps", doc.relabel.sweeps},
        {"converged", doc.relabel.converged}}},
      {"warnings", doc.single_draw_warning ? json::array({"single_draw"}) : json::array()}};
}

/// Orthonormal (Helmert) coordinates of a simplex point in K-1 dimensions;
/// the K vertices map onto a regular simplex.
inline std::vector<double> simplex_coordinates(std::span<const double> tau) {
  const std::size_t k = tau.size();
  std::vector<double> out(k > 0 ? k - 1 : 0, 0.0);
  for (std::size_t m = 1; m < k; ++m) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += tau[c];
    s -= static_cast<double>(m) * tau[m];
    out[m - 1] = s / std::sqrt(static_cast<double>(m * (m + 1)));
  }
  return out;
}

/// Writes report.json plus plot-ready tables: profile_means.csv (cluster,
/// feature, rate), memberships.csv and simplex_coordinates.csv.
inline void write_report(const ReportDocument& doc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t k = doc.spec.k;
  write_atomically(dir / "report.json",
                   [&](std::ostream& os) { os << report_to_json(doc).dump(2) << '\n'; });
  write_atomically(dir / "profile_means.csv", [&](std::ostream& os) {
    os.precision(17);
    os << "cluster,feature,rate\n";
    for (std::size_t c = 0; c < k; ++c) {
      for (std::size_t j = 0; j < doc.feature_names.size(); ++j) {
        os << c + 1 << ',' << doc.feature_names[j] << ',' << doc.rate_means(c, j) << '\n';
      }
    }
  });
  write_atomically(dir / "memberships.csv", [&](std::ostream& os) {
    os.precision(17);
    os << "unit_id";
    for (std::size_t c = 1; c <= k; ++c) os << ",cluster_" << c;
    os << '\n';
    for (std::size_t i = 0; i < doc.unit_ids.size(); ++i) {
      os << doc.unit_ids[i];
      for (double v : doc.membership_means.row(i)) os << ',' << v;
      os << '\n';
    }
  });
  write_atomically(dir / "simplex_coordinates.csv", [&](std::ostream& os) {
    os.precision(17);
    os << "unit_id";
    for (std::size_t c = 1; c < k; ++c) os << ",x" << c;
    os << '\n';
    for (std::size_t i = 0; i < doc.unit_ids.size(); ++i) {
      os << doc.unit_ids[i];
      for (double v : simplex_coordinates(doc.membership_means.row(i))) os << ',' << v;
      os << '\n';
    }
  });
}

}  // namespace pmclust::io
