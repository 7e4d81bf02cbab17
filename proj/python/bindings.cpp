#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "hazardpipe/consensus/consensus.hpp"
#include "hazardpipe/core/error.hpp"
#include "hazardpipe/detect/metrics.hpp"
#include "hazardpipe/explain/cam.hpp"
#include "hazardpipe/explain/lime.hpp"
#include "hazardpipe/ingest/exif.hpp"
#include "hazardpipe/sim/run.hpp"

namespace py = pybind11;
using namespace hazardpipe;

namespace {

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

Bytes to_bytes(const py::bytes& b) {
  const std::string s = b;
  return Bytes(s.begin(), s.end());
}

BoundingBox box_from(const py::handle& h) {
  const auto v = h.cast<std::vector<double>>();
  if (v.size() != 4) throw Error("InvalidBox", "box needs [x_min, y_min, x_max, y_max]");
  return BoundingBox::make(v[0], v[1], v[2], v[3]);
}

PredictionSet predictions_from(const py::dict& d) {
  PredictionSet out;
  for (const auto& [key, items] : d) {
    auto& list = out[key.cast<std::string>()];
    for (const auto& item : items) {
      const auto row = item.cast<py::dict>();
      list.push_back({box_from(row["box"]), parse_hazard_class(row["class"].cast<std::string>()),
                      row["score"].cast<double>()});
    }
  }
  return out;
}

GroundTruth truth_from(const py::dict& d) {
  GroundTruth out;
  for (const auto& [key, items] : d) {
    auto& list = out[key.cast<std::string>()];
    for (const auto& item : items) {
      const auto row = item.cast<py::dict>();
      list.push_back({box_from(row["box"]), parse_hazard_class(row["class"].cast<std::string>())});
    }
  }
  return out;
}

struct Ballot {
  std::vector<Vote> votes;
  ProfileMap profiles;
};

Ballot ballot_from(const std::vector<double>& credibility, const std::vector<bool>& affirms) {
  if (credibility.size() != affirms.size()) throw Error("OutOfRange", "credibility and affirms differ in length");
  Ballot b;
  for (std::size_t i = 0; i < credibility.size(); ++i) {
    const std::string id = "v" + std::to_string(i);
    b.profiles[id] = {id, credibility[i], 0, false};
    b.votes.push_back({id, "d", {affirms[i] ? VerdictKind::Confirm : VerdictKind::Reject, std::nullopt, std::nullopt},
                       from_epoch_ms(static_cast<std::int64_t>(i))});
  }
  return b;
}

}  // namespace

PYBIND11_MODULE(_hazardpipe, m) {
  m.doc() = "hazardpipe core routines";
  static PyObject* error_type =
      PyErr_NewException("hazardpipe._hazardpipe.HazardpipeError", PyExc_ValueError, nullptr);
  m.attr("HazardpipeError") = py::reinterpret_borrow<py::object>(error_type);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
      exc.attr("kind") = e.kind();
      PyErr_SetObject(error_type, exc.ptr());
    }
  });

  m.def(
      "evaluate",
      [](const py::dict& predictions, const py::dict& truth) {
        const auto p = predictions_from(predictions);
        const auto t = truth_from(truth);
        return to_py(nlohmann::json(evaluate(p, t)));
      },
      py::arg("predictions"), py::arg("truth"),
      "Detection metrics. Both arguments map image id to a list of {'box', 'class'[, 'score']} dicts.");

  m.def(
      "run_scenario",
      [](std::uint64_t seed, int n_images, int n_sites) {
        sim::ScenarioConfig cfg;
        cfg.seed = seed;
        cfg.n_images = n_images;
        cfg.n_sites = n_sites;
        sim::ScenarioResult r;
        {
          py::gil_scoped_release release;
          r = sim::run_scenario(cfg);
        }
        py::dict out;
        out["seed"] = seed;
        out["metrics"] = to_py(nlohmann::json(r.metrics));
        out["agreement"] = r.agreement;
        out["sites_planted"] = r.recovery.planted;
        out["sites_recovered"] = r.recovery.recovered;
        out["latency_reduction"] = r.latency.reduction_vs_baseline;
        out["overhead_ms_mean"] = r.overhead_ms_mean;
        out["active_validators"] = r.active_validators;
        out["replay_consistent"] = r.replay_consistent;
        out["runtime_s"] = r.runtime_s;
        out["metrics_csv"] = sim::metrics_csv(r);
        return out;
      },
      py::arg("seed") = 1, py::arg("n_images") = 1000, py::arg("n_sites") = 50,
      "Runs the synthetic pilot scenario and returns its summary.");

  m.def(
      "cam",
      [](py::array_t<double, py::array::c_style | py::array::forcecast> channels,
         py::array_t<double, py::array::c_style | py::array::forcecast> weights, int width, int height) {
        if (channels.ndim() != 3) throw Error("BadStack", "channels must be (K, rows, cols)");
        if (weights.ndim() != 1 || weights.shape(0) != channels.shape(0)) {
          throw Error("BadStack", "weights must have one entry per channel");
        }
        FeatureStack fs;
        fs.rows = static_cast<int>(channels.shape(1));
        fs.cols = static_cast<int>(channels.shape(2));
        const auto k = static_cast<std::size_t>(channels.shape(0));
        const std::size_t cells = static_cast<std::size_t>(fs.rows) * fs.cols;
        const double* src = channels.data();
        for (std::size_t c = 0; c < k; ++c) fs.channels.emplace_back(src + c * cells, src + (c + 1) * cells);
        fs.class_weights[HazardClass::Other] = std::vector<double>(weights.data(), weights.data() + k);
        const auto h = cam(fs, HazardClass::Other, width, height);
        py::array_t<double> grid({h.rows, h.cols});
        std::copy(h.grid.begin(), h.grid.end(), grid.mutable_data());
        py::dict out;
        out["grid"] = grid;
        out["peak"] = py::make_tuple(h.peak.first, h.peak.second);
        if (h.width > 0 && h.height > 0) {
          py::array_t<float> up({h.height, h.width});
          std::copy(h.upsampled.begin(), h.upsampled.end(), up.mutable_data());
          out["upsampled"] = up;
        } else {
          out["upsampled"] = py::none();
        }
        return out;
      },
      py::arg("channels"), py::arg("weights"), py::arg("width") = 0, py::arg("height") = 0,
      "Class activation map of a (K, rows, cols) feature stack under one weight vector.");

  m.def(
      "lime_fit",
      [](const std::function<double(const std::vector<std::uint8_t>&)>& predict, int rows, int cols, int n_samples,
         double kernel_width, double ridge, int top_k, std::uint64_t seed, bool exhaustive) {
        LimeConfig cfg;
        cfg.rows = rows;
        cfg.cols = cols;
        cfg.n_samples = n_samples;
        cfg.kernel_width = kernel_width;
        cfg.ridge = ridge;
        cfg.top_k = top_k;
        cfg.seed = seed;
        cfg.exhaustive = exhaustive;
        return to_py(to_json(lime_fit(predict, cfg)));
      },
      py::arg("predict"), py::arg("rows") = 6, py::arg("cols") = 6, py::arg("n_samples") = 1000,
      py::arg("kernel_width") = 0.25, py::arg("ridge") = 1e-3, py::arg("top_k") = 5, py::arg("seed") = 0,
      py::arg("exhaustive") = false,
      "Weighted ridge surrogate of `predict`, which maps a 0/1 keep-mask (list) to a score.");

  m.def(
      "consensus_score",
      [](const std::vector<double>& credibility, const std::vector<bool>& affirms) {
        const auto b = ballot_from(credibility, affirms);
        return consensus_score(b.votes, b.profiles);
      },
      py::arg("credibility"), py::arg("affirms"));

  m.def(
      "decide",
      [](const std::vector<double>& credibility, const std::vector<bool>& affirms, double uncertainty, int quorum,
         double tau_hi, double tau_lo, double u_esc) {
        ConsensusConfig cfg;
        cfg.quorum = quorum;
        cfg.tau_hi = tau_hi;
        cfg.tau_lo = tau_lo;
        cfg.u_esc = u_esc;
        const auto b = ballot_from(credibility, affirms);
        ConsensusState s;
        s.detection_id = "d";
        return to_py(to_json(decide(s, b.votes, b.profiles, uncertainty, cfg)));
      },
      py::arg("credibility"), py::arg("affirms"), py::arg("uncertainty") = 0.0, py::arg("quorum") = 3,
      py::arg("tau_hi") = 0.7, py::arg("tau_lo") = 0.3, py::arg("u_esc") = 0.6);

  m.def(
      "anonymize",
      [](const py::bytes& image) {
        const auto out = anonymize(to_bytes(image));
        return py::bytes(reinterpret_cast<const char*>(out.data()), out.size());
      },
      py::arg("image"), "Strips identifying metadata from JPEG or PNG bytes.");

  m.def(
      "extract_geotag",
      [](const py::bytes& image) -> py::object {
        const auto g = extract_geotag(to_bytes(image));
        if (!g) return py::none();
        return py::make_tuple(g->lat(), g->lon());
      },
      py::arg("image"));

  m.def("has_gps", [](const py::bytes& image) { return has_gps_exif(to_bytes(image)); }, py::arg("image"));
}
