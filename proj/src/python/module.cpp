#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "airbeam/airlink/airlink.hpp"
#include "airbeam/baselines/baselines.hpp"
#include "airbeam/channel/channel.hpp"
#include "airbeam/exp/experiment.hpp"
#include "airbeam/training/training.hpp"

namespace py = pybind11;
using namespace airbeam;

namespace {

chan::ChannelRealization from_matrices(const std::vector<Eigen::MatrixXcd>& H) {
  if (H.empty()) throw std::invalid_argument("need at least one user channel");
  chan::ChannelRealization ch;
  for (const auto& h : H) {
    if (h.rows() != H[0].rows() || h.cols() != H[0].cols()) throw std::invalid_argument("user channels differ in shape");
    chan::UserChannel u;
    u.H = h;
    ch.users.push_back(std::move(u));
  }
  return ch;
}

std::vector<Eigen::MatrixXcd> matrices(const chan::ChannelRealization& ch) {
  std::vector<Eigen::MatrixXcd> out;
  for (const auto& u : ch.users) out.push_back(u.H);
  return out;
}

py::dict row_dict(const exp::ResultRow& r) {
  py::dict d;
  d["scheme"] = r.scheme;
  d["snr_db"] = r.snr_db;
  d["Q"] = r.Q;
  d["B"] = r.B;
  d["K"] = r.K;
  d["Lp"] = py::make_tuple(r.Lp.lo, r.Lp.hi);
  d["B_phase"] = r.B_phase;
  d["sum_rate_bps_hz"] = r.sum_rate_bps_hz;
  d["n_realizations"] = r.n_realizations;
  d["seed"] = r.seed;
  d["config_hash"] = r.config_hash;
  d["wall_clock_s"] = r.wall_clock_s;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Channel simulation, classical baselines and experiment runner of airbeam";

  py::register_exception<chan::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<exp::MissingCheckpoint>(m, "MissingCheckpoint", PyExc_FileNotFoundError);

  py::enum_<chan::ChannelKind>(m, "ChannelKind")
      .value("multipath", chan::ChannelKind::multipath)
      .value("cluster", chan::ChannelKind::cluster)
      .value("one_ring", chan::ChannelKind::one_ring);

  py::class_<chan::IntRange>(m, "IntRange")
      .def(py::init([](int lo, int hi) { return chan::IntRange{lo, hi}; }), py::arg("lo"), py::arg("hi"))
      .def_readwrite("lo", &chan::IntRange::lo)
      .def_readwrite("hi", &chan::IntRange::hi)
      .def("__repr__", [](const chan::IntRange& r) {
        return "IntRange(" + std::to_string(r.lo) + ", " + std::to_string(r.hi) + ")";
      });

  py::class_<chan::SystemConfig>(m, "SystemConfig")
      .def(py::init<>())
      .def_readwrite("Ny", &chan::SystemConfig::Ny)
      .def_readwrite("Nz", &chan::SystemConfig::Nz)
      .def_readwrite("Nc", &chan::SystemConfig::Nc)
      .def_readwrite("K", &chan::SystemConfig::K)
      .def_readwrite("Q", &chan::SystemConfig::Q)
      .def_readwrite("Pt", &chan::SystemConfig::Pt)
      .def_readwrite("snr_db", &chan::SystemConfig::snr_db)
      .def_readwrite("B", &chan::SystemConfig::B)
      .def_readwrite("B_phase", &chan::SystemConfig::B_phase)
      .def_readwrite("Lp", &chan::SystemConfig::Lp)
      .def_readwrite("Ts", &chan::SystemConfig::Ts)
      .def_readwrite("channel_kind", &chan::SystemConfig::channel_kind)
      .def_readwrite("Jc", &chan::SystemConfig::Jc)
      .def_readwrite("Jp", &chan::SystemConfig::Jp)
      .def_readwrite("sigma_theta", &chan::SystemConfig::sigma_theta)
      .def_readwrite("sigma_tau", &chan::SystemConfig::sigma_tau)
      .def_readwrite("seed", &chan::SystemConfig::seed)
      .def_property_readonly("M", &chan::SystemConfig::M)
      .def("validate", &chan::SystemConfig::validate)
      .def("snapshot", &chan::SystemConfig::snapshot)
      .def("sigma2", [](const chan::SystemConfig& c) { return chan::sigma_from_snr(c); });

  m.def("array_response", &chan::array_response, py::arg("theta"), py::arg("phi"), py::arg("Ny"), py::arg("Nz"));
  m.def(
      "gen_channel",
      [](const chan::SystemConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Rng rng(seed);
        return matrices(chan::gen_channel(cfg, rng));
      },
      py::arg("cfg"), py::arg("seed"), "One realization as a list of M x Nc user channels.");
  m.def(
      "test_pool",
      [](const chan::SystemConfig& cfg, std::int64_t n, std::uint64_t seed) {
        std::vector<std::vector<Eigen::MatrixXcd>> out;
        for (const auto& r : train::gen_split(cfg, train::Split::test, n, seed)) out.push_back(matrices(r));
        return out;
      },
      py::arg("cfg"), py::arg("n"), py::arg("seed"), "The first n realizations of the seeded test split.");

  m.def(
      "zf_fully_digital",
      [](const std::vector<Eigen::MatrixXcd>& H, double Pt) { return base::zf_fully_digital(from_matrices(H), Pt); },
      py::arg("H"), py::arg("Pt"));
  m.def(
      "pca_hb",
      [](const std::vector<Eigen::MatrixXcd>& H, double Pt) {
        const auto bf = base::pca_hb(from_matrices(H), Pt);
        return py::make_tuple(bf.F_RF, bf.F_BB);
      },
      py::arg("H"), py::arg("Pt"), "Returns (F_RF, [F_BB per subcarrier]).");
  m.def(
      "ss_hb",
      [](const std::vector<Eigen::MatrixXcd>& H, const Eigen::MatrixXcd& codebook, double Pt) {
        const auto bf = base::ss_hb(from_matrices(H), codebook, Pt);
        return py::make_tuple(bf.F_RF, bf.F_BB);
      },
      py::arg("H"), py::arg("codebook"), py::arg("Pt"));
  m.def(
      "sum_rate",
      [](const std::vector<Eigen::MatrixXcd>& H, const std::vector<Eigen::MatrixXcd>& F, double sigma2) {
        return link::sum_rate_digital(from_matrices(H), F, sigma2);
      },
      py::arg("H"), py::arg("F"), py::arg("sigma2"), "Per-subcarrier mean sum rate of full precoders F[n] (M x K).");
  m.def("quantize_phase", &link::quantize_phase, py::arg("theta"), py::arg("bits"));

  m.def(
      "sw_omp",
      [](const Eigen::MatrixXcd& Y, const Eigen::MatrixXcd& Phi, const chan::SystemConfig& cfg, int grid, int max_paths) {
        const auto dict = base::AngleDelayDictionary::make(cfg, grid, grid, cfg.Nc);
        base::OmpStop stop;
        stop.max_paths = max_paths;
        const auto est = base::sw_omp_estimate(Y, Phi, dict, stop);
        return py::make_tuple(est.H, est.support);
      },
      py::arg("Y"), py::arg("Phi"), py::arg("cfg"), py::arg("grid") = 64, py::arg("max_paths") = 2,
      "SW-OMP estimate from Y = Phi H; returns (H_hat, support).");
  m.def(
      "fdd_pilot_matrix", &link::fdd_pilot_matrix, py::arg("phi"), py::arg("Pt"), py::arg("Nc"));
  m.def(
      "lloyd_max",
      [](std::vector<double> samples, int bits, std::uint64_t seed) {
        return base::lloyd_max(std::move(samples), bits, seed).levels;
      },
      py::arg("samples"), py::arg("bits"), py::arg("seed") = 1, "Sorted Lloyd-max levels.");

  py::class_<exp::ExperimentConfig>(m, "ExperimentConfig")
      .def_static("parse", &exp::ExperimentConfig::parse, py::arg("yaml_text"))
      .def_static("load", &exp::ExperimentConfig::load, py::arg("path"))
      .def_readwrite("name", &exp::ExperimentConfig::name)
      .def_readwrite("seed", &exp::ExperimentConfig::seed)
      .def_readwrite("system", &exp::ExperimentConfig::system)
      .def_readwrite("eval_realizations", &exp::ExperimentConfig::eval_realizations)
      .def_readwrite("results_csv", &exp::ExperimentConfig::results_csv)
      .def_readwrite("checkpoint_dir", &exp::ExperimentConfig::checkpoint_dir)
      .def_property_readonly("points", &exp::ExperimentConfig::points)
      .def("hash", &exp::ExperimentConfig::hash)
      .def("canonical", &exp::ExperimentConfig::canonical);

  m.def(
      "run_experiment",
      [](const exp::ExperimentConfig& cfg, bool eval_only, std::optional<std::filesystem::path> checkpoint, int workers) {
        exp::RunOptions o;
        o.eval_only = eval_only;
        o.checkpoint = std::move(checkpoint);
        o.workers = workers;
        std::vector<exp::ResultRow> rows;
        {
          py::gil_scoped_release release;
          rows = exp::run_experiment(cfg, o);
        }
        py::list out;
        for (const auto& r : rows) out.append(row_dict(r));
        return out;
      },
      py::arg("cfg"), py::arg("eval_only") = false, py::arg("checkpoint") = py::none(), py::arg("workers") = 0,
      "Trains or loads the learned schemes, evaluates everything and returns one dict per result row.");
  m.def("results_header", &exp::results_header);
}
