#include "cli_support.hpp"

#include "univc/diagnostics.hpp"
#include "univc/io.hpp"
#include "univc/simharness.hpp"
#include "univc/structured.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <filesystem>
#include <sstream>

namespace univc::cli {

namespace {

double to_number(const std::string& s, const std::string& what) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last)
    throw UsageError("bad number '" + s + "' in " + what);
  return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    out.push_back(a == std::string::npos ? "" : item.substr(a, b - a + 1));
  }
  return out;
}

template <class T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key) || j.at(key).is_null()) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config key '") + key + "': " + e.what());
  }
}

}  // namespace

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, x >>= 4) s[i] = digits[x & 0xf];
  return s;
}

NullSpec parse_null(const std::string& text, Index M) {
  NullSpec out;
  bool have_scale = false;
  for (const auto& tok : split(text, ',')) {
    if (tok.empty()) continue;
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw UsageError("null term '" + tok + "' lacks '='");
    const std::string lhs = tok.substr(0, eq);
    std::size_t digits = 0;
    while (digits < lhs.size() && std::isalpha(static_cast<unsigned char>(lhs[digits]))) ++digits;
    const std::string kind = lhs.substr(0, digits);
    const double idx = to_number(lhs.substr(digits), "null term '" + tok + "'");
    double v = to_number(tok.substr(eq + 1), "null term '" + tok + "'");
    NullSpec::Scale scale;
    if (kind == "h") {
      scale = NullSpec::Scale::H2;
    } else if (kind == "s") {
      scale = NullSpec::Scale::Sigma2;
    } else if (kind == "sd") {
      scale = NullSpec::Scale::Sigma2;
      if (v < 0.0) throw UsageError("standard deviation must be nonnegative in '" + tok + "'");
      v = v * v;
    } else {
      throw UsageError("null term '" + tok + "': expected h<m>, s<m> or sd<m>");
    }
    if (have_scale && scale != out.scale) throw UsageError("null mixes proportion and variance terms");
    out.scale = scale;
    have_scale = true;
    const Index m = static_cast<Index>(idx);
    if (static_cast<double>(m) != idx || m < 1 || m > M)
      throw UsageError("null term '" + tok + "': component must be in 1.." + std::to_string(M));
    if (!out.pinned.emplace(m - 1, v).second)
      throw UsageError("component " + std::to_string(m) + " pinned twice");
  }
  out.validate(M);
  return out;
}

CiGrid parse_grid(const std::string& text) {
  const auto parts = split(text, ':');
  if (parts.size() != 3) throw UsageError("grid must be lo:hi:steps, got '" + text + "'");
  CiGrid g;
  g.lo = to_number(parts[0], "grid");
  g.hi = to_number(parts[1], "grid");
  const double steps = to_number(parts[2], "grid");
  g.steps = static_cast<int>(steps);
  if (g.steps != steps || g.steps < 2) throw UsageError("grid steps must be an integer >= 2");
  if (!(g.hi > g.lo)) throw UsageError("grid needs lo < hi");
  return g;
}

std::string Config::resolve(const std::string& file) const {
  std::filesystem::path p(file);
  if (p.is_absolute()) return file;
  return (std::filesystem::path(base_dir) / p).lexically_normal().string();
}

std::string Config::path(const std::string& key) const {
  if (!data.contains(key)) throw UsageError("config lacks '" + key + "'");
  return resolve(data.at(key).get<std::string>());
}

Config load_config(const std::string& path) {
  Config c;
  const std::string text = io::read_text(path);
  try {
    c.data = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!c.data.is_object()) throw ParseError(path + ": the top level must be an object");
  c.base_dir = std::filesystem::path(path).parent_path().string();
  if (c.base_dir.empty()) c.base_dir = ".";
  return c;
}

namespace {

CrossedDesign design_from_json(const json& d) {
  CrossedDesign design;
  design.dims = get_or<std::vector<Index>>(d, "dims", {});
  if (d.contains("random")) {
    design.random = d.at("random").get<std::vector<Index>>();
  } else {
    for (Index f = 0; f < static_cast<Index>(design.dims.size()); ++f) design.random.push_back(f);
  }
  design.validate();
  return design;
}

KernelSet finish_dense(const Config& c, std::vector<MatrixXd> dense) {
  const json& j = c.data;
  if (j.contains("truncate")) {
    const auto q = j.at("truncate").get<std::vector<Index>>();
    if (q.size() != dense.size())
      throw UsageError("'truncate' needs one rank per kernel");
    for (std::size_t m = 0; m < dense.size(); ++m) dense[m] = approx_truncate(dense[m], q[m]);
  }
  const std::string structure = get_or<std::string>(j, "structure", "auto");
  if (structure == "none") return KernelSet::dense(std::move(dense));
  if (structure != "auto") throw UsageError("'structure' must be auto or none");
  KernelSet K = KernelSet::dense(std::move(dense));
  if (auto E = detect_structure(K.dense_kernels()))
    return KernelSet::from_structure(std::move(*E), K.dense_kernels());
  return K;
}

}  // namespace

KernelSet load_kernels(const Config& c, Index n_hint) {
  const json& j = c.data;
  if (j.contains("design")) return KernelSet::crossed(design_from_json(j.at("design")));
  if (!j.contains("kernels")) throw UsageError("config needs 'kernels', 'design' or 'data'");
  std::vector<MatrixXd> dense;
  std::vector<VectorXd> eigs;
  for (const auto& entry : j.at("kernels")) {
    if (entry.is_string()) {
      dense.push_back(io::read_matrix_csv(c.resolve(entry.get<std::string>())));
    } else if (entry.contains("dense")) {
      dense.push_back(io::read_matrix_csv(c.resolve(entry.at("dense").get<std::string>())));
    } else if (entry.contains("lambda")) {
      eigs.push_back(io::read_column_csv(c.resolve(entry.at("lambda").get<std::string>()), "lambda"));
    } else {
      throw UsageError("kernel entries are a path, {\"dense\": path} or {\"lambda\": path}");
    }
  }
  if (!dense.empty() && !eigs.empty())
    throw UsageError("kernels must be all dense or all eigenvalue files");
  if (dense.empty() && eigs.empty()) return KernelSet::empty(n_hint);
  if (!dense.empty()) return finish_dense(c, std::move(dense));
  if (j.contains("truncate")) {
    const auto q = j.at("truncate").get<std::vector<Index>>();
    if (q.size() != eigs.size()) throw UsageError("'truncate' needs one rank per kernel");
    for (std::size_t m = 0; m < eigs.size(); ++m) {
      std::vector<Index> order(eigs[m].size());
      for (Index i = 0; i < eigs[m].size(); ++i) order[i] = i;
      std::stable_sort(order.begin(), order.end(),
                       [&](Index a, Index b) { return eigs[m](a) > eigs[m](b); });
      for (std::size_t r = static_cast<std::size_t>(q[m]); r < order.size(); ++r)
        eigs[m](order[r]) = 0.0;
    }
  }
  if (j.contains("basis")) return KernelSet::shared_eigen(io::read_matrix_csv(c.path("basis")), eigs);
  return KernelSet::diagonal(std::move(eigs));
}

Problem load_problem(const Config& c) {
  const json& j = c.data;
  Problem p;
  if (j.contains("data")) {
    const json& d = j.at("data");
    const auto factors = get_or<std::vector<std::string>>(d, "factors", {});
    auto random = get_or<std::vector<std::string>>(d, "random", factors);
    auto cd = io::read_crossed_long(c.resolve(d.at("path").get<std::string>()), factors,
                                    get_or<std::string>(d, "response", "y"), random);
    p.y.y = std::move(cd.y);
    p.design = cd.design;
    p.K = KernelSet::crossed(cd.design);
  } else {
    p.y.y = io::read_column_csv(c.path("response"), "y");
    p.K = load_kernels(c, p.y.n());
    if (j.contains("design")) p.design = design_from_json(j.at("design"));
  }
  if (p.K.n() != p.y.n()) {
    throw DimensionMismatchError("response has " + std::to_string(p.y.n()) +
                                 " entries but the kernels are " + std::to_string(p.K.n()) +
                                 " x " + std::to_string(p.K.n()));
  }
  if (get_or<bool>(j, "center", false)) p.y = center_response(p.y.y);
  return p;
}

FitOptions fit_options(const json& cfg) {
  FitOptions o;
  if (!cfg.contains("optimizer")) return o;
  const json& j = cfg.at("optimizer");
  o.max_iters = get_or<int>(j, "max_iters", o.max_iters);
  o.tol_grad = get_or<double>(j, "tol_grad", o.tol_grad);
  o.tol_obj = get_or<double>(j, "tol_obj", o.tol_obj);
  o.n_starts = get_or<int>(j, "n_starts", o.n_starts);
  o.start_seed = get_or<std::uint64_t>(j, "start_seed", o.start_seed);
  return o;
}

SlrtOptions slrt_options(const json& cfg) {
  SlrtOptions o;
  o.fit = fit_options(cfg);
  o.method = method_from_string(get_or<std::string>(cfg, "method", "auto"));
  const Variant v = variant_from_string(get_or<std::string>(cfg, "variant", "exact"));
  if (v == Variant::Unconstrained) o.relaxed_alt = o.relaxed_null = true;
  if (v == Variant::Approx && !cfg.contains("truncate"))
    throw UsageError("variant approx needs 'truncate' ranks");
  return o;
}

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Usage:
    case ErrorKind::Parse:
    case ErrorKind::InvalidParameter:
    case ErrorKind::InvalidDesign:
    case ErrorKind::InvalidSplit:
    case ErrorKind::DimensionMismatch:
      return 1;
    default:
      return 2;
  }
}

}  // namespace univc::cli
