/*
 * Copyright 2026 The Flywheel Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "flywheel/curation.hpp"
#include "flywheel/error.hpp"
#include "flywheel/judge.hpp"
#include "flywheel/orchestrator.hpp"
#include "flywheel/rollout.hpp"
#include "flywheel/simulation.hpp"

namespace py = pybind11;
using namespace flywheel;

namespace {

py::object to_py(const json& j) {
    return py::module_::import("json").attr("loads")(j.dump());
}

json from_py(const py::handle& o) {
    return json::parse(py::module_::import("json").attr("dumps")(o).cast<std::string>());
}

std::vector<DatasetExample> examples_from_py(const py::list& items) {
    std::vector<DatasetExample> out;
    for (const auto& item : items) out.push_back(from_py(item).get<DatasetExample>());
    return out;
}

py::list examples_to_py(const std::vector<DatasetExample>& examples) {
    py::list out;
    for (const auto& e : examples) out.append(to_py(json(e)));
    return out;
}

}  // namespace

PYBIND11_MODULE(_flywheel, m) {
    static py::exception<Error> error_type(m, "FlywheelError");
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::set_error(error_type, e.what());
        }
    });

    m.def(
        "simulate",
        [](const std::string& out, std::size_t sessions, double error_rate, double rephrasal_rate,
           std::uint64_t seed) {
            SimulationOptions o;
            o.sessions = sessions;
            o.routing_error_rate = error_rate;
            o.rephrasal_error_rate = rephrasal_rate;
            o.seed = seed;
            auto s = run_simulation(o, out);
            py::dict d;
            d["sessions"] = s.sessions;
            d["traces"] = s.traces;
            d["feedback"] = s.feedback;
            d["negatives"] = s.negatives;
            d["routing_errors"] = s.routing_errors;
            d["rephrasal_errors"] = s.rephrasal_errors;
            d["config_path"] = s.config_path.string();
            d["ground_truth_path"] = s.ground_truth_path.string();
            return d;
        },
        py::arg("out"), py::arg("sessions") = 1000, py::arg("error_rate") = 0.05,
        py::arg("rephrasal_rate") = 0.03, py::arg("seed") = 0);

    m.def(
        "run_cycle",
        [](const std::string& config_path) {
            auto cfg = load_deployment_config(config_path);
            CycleReport r;
            {
                py::gil_scoped_release release;
                r = FlywheelOrchestrator(open_deployment(cfg)).run_cycle(cfg.cycle);
            }
            return to_py(json(r));
        },
        py::arg("config_path"));

    m.def(
        "reports",
        [](const std::string& config_path) {
            FlywheelOrchestrator orch(open_deployment(load_deployment_config(config_path)));
            py::list out;
            for (const auto& r : orch.reports()) out.append(to_py(json(r)));
            return out;
        },
        py::arg("config_path"));

    m.def("build_judge_prompt", &build_judge_prompt, py::arg("query"), py::arg("tools"));
    m.def(
        "parse_judge_verdict",
        [](const std::string& raw) {
            auto v = parse_judge_verdict(raw);
            return py::make_tuple(v.routing_correct, v.reasoning);
        },
        py::arg("raw"));

    m.def("traffic_bucket", &traffic_bucket, py::arg("session_id"));

    m.def(
        "dedupe", [](const py::list& items) { return examples_to_py(dedupe(examples_from_py(items))); },
        py::arg("examples"));
    m.def(
        "split",
        [](const py::list& items, const std::vector<double>& ratios, std::uint64_t seed) {
            auto parts = split(examples_from_py(items), ratios, seed);
            py::dict d;
            d["train"] = examples_to_py(parts.train);
            d["validation"] = examples_to_py(parts.validation);
            d["test"] = examples_to_py(parts.test);
            return d;
        },
        py::arg("examples"), py::arg("ratios"), py::arg("seed"));
}
