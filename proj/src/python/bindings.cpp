// SPDX-License-Identifier: Apache-2.0
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "idg/config.hpp"
#include "idg/datagen.hpp"
#include "idg/dataset_io.hpp"
#include "idg/dem.hpp"
#include "idg/geometry.hpp"
#include "idg/hungarian.hpp"
#include "idg/metrics.hpp"
#include "idg/model.hpp"
#include "idg/set_loss.hpp"
#include "idg/train.hpp"

namespace py = pybind11;
using namespace idg;

namespace {

Tensor<double> tensor_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty matrix");
  Tensor<double> t({rows.size(), rows[0].size()});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::invalid_argument("ragged matrix");
    for (std::size_t j = 0; j < rows[i].size(); ++j) t.at(i, j) = rows[i][j];
  }
  return t;
}

std::vector<std::vector<double>> tensor_to_rows(const Tensor<double>& t) {
  std::vector<std::vector<double>> rows(t.shape[0],
                                        std::vector<double>(t.shape[1]));
  for (std::size_t i = 0; i < t.shape[0]; ++i)
    for (std::size_t j = 0; j < t.shape[1]; ++j) rows[i][j] = t.at(i, j);
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "image difference grounding laboratory core";

  py::class_<BoxXYXY>(m, "BoxXYXY")
      .def(py::init<>())
      .def(py::init([](double x1, double y1, double x2, double y2) {
        return BoxXYXY{x1, y1, x2, y2};
      }))
      .def_readwrite("x1", &BoxXYXY::x1)
      .def_readwrite("y1", &BoxXYXY::y1)
      .def_readwrite("x2", &BoxXYXY::x2)
      .def_readwrite("y2", &BoxXYXY::y2)
      .def("area", &BoxXYXY::area);

  m.def("iou", &iou, py::arg("a"), py::arg("b"));
  m.def("giou", &giou, py::arg("a"), py::arg("b"));

  m.def(
      "hungarian",
      [](const std::vector<std::vector<double>>& cost) {
        return hungarian(tensor_from_rows(cost));
      },
      py::arg("cost"), "Optimal assignment for a K x G cost matrix (K >= G).");

  m.def(
      "dem_forward",
      [](const std::vector<std::vector<double>>& f1,
         const std::vector<std::vector<double>>& f2,
         const std::vector<std::vector<double>>& wq,
         const std::vector<std::vector<double>>& wk,
         const std::vector<std::vector<double>>& wv, double alpha, double beta,
         bool scale_attention) {
        DemParams<double> p;
        p.wq = tensor_from_rows(wq);
        p.wk = tensor_from_rows(wk);
        p.wv = tensor_from_rows(wv);
        p.alpha = alpha;
        p.beta = beta;
        p.scale_attention = scale_attention;
        DemOut<double> out =
            dem_forward(tensor_from_rows(f1), tensor_from_rows(f2), p);
        py::dict d;
        d["f1"] = tensor_to_rows(out.f1);
        d["f2"] = tensor_to_rows(out.f2);
        d["a1"] = tensor_to_rows(out.trace.a1);
        d["a2"] = tensor_to_rows(out.trace.a2);
        d["ad"] = tensor_to_rows(out.trace.ad);
        d["ac"] = tensor_to_rows(out.trace.ac);
        return d;
      },
      py::arg("f1"), py::arg("f2"), py::arg("wq"), py::arg("wk"), py::arg("wv"),
      py::arg("alpha") = 0.75, py::arg("beta") = 0.75,
      py::arg("scale_attention") = true);

  m.def("generate_dataset",
        [](std::uint64_t seed, std::size_t n_pairs, const std::string& out) {
          generate_dataset(seed, n_pairs, DatagenConfig{}, out);
        },
        py::arg("seed"), py::arg("pairs"), py::arg("out_dir"));

  m.def("evaluate_files",
        [](const std::string& manifest_path, const std::string& pred_path,
           const std::string& split) {
          auto manifest = read_manifest(manifest_path);
          if (split != "all")
            std::erase_if(manifest, [&](const ManifestRecord& r) {
              return r.split != split;
            });
          EvalReport r = evaluate(read_predictions(pred_path), manifest);
          py::dict d;
          d["diff_app"] = r.diff_app;
          d["diff_rem"] = r.diff_rem;
          d["diff_rep"] = r.diff_rep;
          d["diff_all"] = r.diff_all;
          return d;
        },
        py::arg("manifest"), py::arg("predictions"), py::arg("split") = "all");

  m.def("gradcheck_dem", &gradcheck_dem, py::arg("draws") = 10,
        py::arg("seed") = 1);
}
