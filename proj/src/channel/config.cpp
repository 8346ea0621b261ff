#include "airbeam/channel/config.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <sstream>

namespace airbeam::chan {

const char* to_string(ChannelKind kind) {
  switch (kind) {
    case ChannelKind::multipath: return "multipath";
    case ChannelKind::cluster: return "cluster";
    case ChannelKind::one_ring: return "one_ring";
  }
  return "?";
}

ChannelKind channel_kind_from_string(const std::string& s) {
  if (s == "multipath") return ChannelKind::multipath;
  if (s == "cluster") return ChannelKind::cluster;
  if (s == "one_ring") return ChannelKind::one_ring;
  throw ConfigError("channel_kind", "expected multipath, cluster or one_ring, got '" + s + "'");
}

namespace {

void require(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ConfigError(field, msg);
}

void check_range(const IntRange& r, const char* field, int min_lo) {
  require(r.lo >= min_lo, field, "lower bound must be >= " + std::to_string(min_lo));
  require(r.hi >= r.lo, field, "upper bound below lower bound");
}

std::string range_str(const IntRange& r) {
  return r.fixed() ? std::to_string(r.lo) : std::to_string(r.lo) + ".." + std::to_string(r.hi);
}

IntRange parse_range(const std::string& field, const std::string& s) {
  IntRange r;
  const auto dots = s.find("..");
  try {
    if (dots == std::string::npos) {
      r.lo = r.hi = std::stoi(s);
    } else {
      r.lo = std::stoi(s.substr(0, dots));
      r.hi = std::stoi(s.substr(dots + 2));
    }
  } catch (const std::exception&) {
    throw ConfigError(field, "expected an integer or lo..hi, got '" + s + "'");
  }
  return r;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace

void SystemConfig::validate() const {
  require(Ny >= 1, "Ny", "must be >= 1");
  require(Nz >= 1, "Nz", "must be >= 1");
  require(K >= 1, "K", "must be >= 1");
  require(M() >= K, "K", "needs M = Ny*Nz >= K");
  require(Nc >= 1, "Nc", "must be >= 1");
  require(Q >= 1, "Q", "must be >= 1");
  require(Pt > 0 && std::isfinite(Pt), "Pt", "must be positive");
  require(std::isfinite(snr_db), "snr_db", "must be finite");
  require(B >= 1, "B", "must be >= 1");
  require(B_phase >= 0 && B_phase <= 16, "B_phase", "must be in 0..16");
  check_range(Lp, "Lp", 1);
  require(Ts > 0, "Ts", "must be positive");
  check_range(Jc, "Jc", 1);
  check_range(Jp, "Jp", 1);
  require(sigma_theta >= 0 && sigma_theta < 1.5707963267948966, "sigma_theta", "must be in [0, pi/2)");
  require(sigma_tau >= 0, "sigma_tau", "must be >= 0");
}

std::string SystemConfig::snapshot() const {
  std::ostringstream os;
  os << "Ny: " << Ny << "\n"
     << "Nz: " << Nz << "\n"
     << "Nc: " << Nc << "\n"
     << "K: " << K << "\n"
     << "Q: " << Q << "\n"
     << "Pt: " << fmt_double(Pt) << "\n"
     << "snr_db: " << fmt_double(snr_db) << "\n"
     << "snr_sqrt_literal: " << (snr_sqrt_literal ? "true" : "false") << "\n"
     << "B: " << B << "\n"
     << "B_phase: " << B_phase << "\n"
     << "Lp: " << range_str(Lp) << "\n"
     << "Ts: " << fmt_double(Ts) << "\n"
     << "channel_kind: " << to_string(channel_kind) << "\n"
     << "Jc: " << range_str(Jc) << "\n"
     << "Jp: " << range_str(Jp) << "\n"
     << "sigma_theta: " << fmt_double(sigma_theta) << "\n"
     << "sigma_tau: " << fmt_double(sigma_tau) << "\n"
     << "seed: " << seed << "\n";
  return os.str();
}

SystemConfig SystemConfig::from_snapshot(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto colon = line.find(':');
    if (colon == std::string::npos) continue;
    auto value = line.substr(colon + 1);
    value.erase(0, value.find_first_not_of(' '));
    kv[line.substr(0, colon)] = value;
  }
  SystemConfig c;
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto as_int = [&](const char* key, int& out) {
    if (auto v = get(key)) {
      try {
        out = std::stoi(*v);
      } catch (const std::exception&) {
        throw ConfigError(key, "expected an integer, got '" + *v + "'");
      }
    }
  };
  auto as_double = [&](const char* key, double& out) {
    if (auto v = get(key)) {
      try {
        out = std::stod(*v);
      } catch (const std::exception&) {
        throw ConfigError(key, "expected a number, got '" + *v + "'");
      }
    }
  };
  as_int("Ny", c.Ny);
  as_int("Nz", c.Nz);
  as_int("Nc", c.Nc);
  as_int("K", c.K);
  as_int("Q", c.Q);
  as_double("Pt", c.Pt);
  as_double("snr_db", c.snr_db);
  if (auto v = get("snr_sqrt_literal")) c.snr_sqrt_literal = *v == "true";
  as_int("B", c.B);
  as_int("B_phase", c.B_phase);
  if (auto v = get("Lp")) c.Lp = parse_range("Lp", *v);
  as_double("Ts", c.Ts);
  if (auto v = get("channel_kind")) c.channel_kind = channel_kind_from_string(*v);
  if (auto v = get("Jc")) c.Jc = parse_range("Jc", *v);
  if (auto v = get("Jp")) c.Jp = parse_range("Jp", *v);
  as_double("sigma_theta", c.sigma_theta);
  as_double("sigma_tau", c.sigma_tau);
  if (auto v = get("seed")) c.seed = std::stoull(*v);
  return c;
}

double sigma_from_snr(const SystemConfig& cfg) {
  const double ratio = cfg.snr_sqrt_literal ? std::pow(10.0, cfg.snr_db / 5.0) : std::pow(10.0, cfg.snr_db / 10.0);
  return cfg.Pt / (cfg.Nc * ratio);
}

}  // namespace airbeam::chan
