#include <algorithm>
#include <iomanip>

#include "slotune/errors.hpp"
#include "slotune/tuner.hpp"

namespace slotune {

using nlohmann::json;

TuningReport make_report(const SearchSpace& space, const TunerConfig& config, const TunerState& state) {
  TuningReport r;
  r.space = space.name();
  r.objective = config.objective;
  r.strategy = config.strategy;
  r.evaluations = state.observations.size();
  r.iterations = state.iterations;
  r.solver_calls = state.solver_calls;
  r.robustness = state.robustness;

  std::vector<std::size_t> valid;
  for (std::size_t i = 0; i < state.observations.size(); ++i) {
    const auto& o = state.observations[i];
    if (o.obs.valid())
      valid.push_back(i);
    else
      ++r.invalid;
    if (o.source == Source::solver) ++r.solver_suggestions;
    if (o.source == Source::fallback) ++r.fallback_suggestions;
  }
  if (valid.empty()) throw NoValidObservations("no evaluation ran successfully");

  r.final_delta = state.threshold.delta;
  r.min_delta = r.max_delta = 0.5;
  for (const auto& s : state.trajectory) {
    r.min_delta = std::min(r.min_delta, s.delta);
    r.max_delta = std::max(r.max_delta, s.delta);
  }

  auto values = [&](std::size_t i) { return config.objective.values(*state.observations[i].obs.metrics); };
  if (!config.objective.multi()) {
    std::size_t best = valid.front();
    for (auto i : valid)
      if (values(i)[0] > values(best)[0]) best = i;  // strict: earliest index wins ties
    r.best = best;
    return r;
  }

  Eigen::MatrixXd y(static_cast<Eigen::Index>(valid.size()), 2);
  for (std::size_t j = 0; j < valid.size(); ++j) y.row(static_cast<Eigen::Index>(j)) = values(valid[j]).transpose();
  for (auto row : pareto_indices(y)) r.front.push_back(valid[static_cast<std::size_t>(row)]);

  const auto& def = state.observations.front().obs;
  if (def.valid()) {
    r.reference = config.objective.values(*def.metrics);
    ParetoFront f;
    f.reference = *r.reference;
    double best_hv = -1.0;
    for (auto i : r.front) {
      const Point2 p = values(i);
      f.points.push_back(p);
      const double hv = hv_single(p, *r.reference);
      if (hv > best_hv) {
        best_hv = hv;
        r.max_hv = i;
      }
    }
    r.front_hypervolume = hypervolume_2d(f);
  }
  return r;
}

double best_objective(const TuningReport& report, const TunerState& state) {
  if (!report.best) throw ValidationError("report has no single-objective best");
  return report.objective.values(*state.observations.at(*report.best).obs.metrics)[0];
}

ReportFormat parse_report_format(std::string_view s) {
  if (s == "table") return ReportFormat::table;
  if (s == "csv") return ReportFormat::csv;
  if (s == "json") return ReportFormat::json;
  throw ValidationError("unknown report format '" + std::string(s) + "' (table, csv, json)");
}

namespace {

json observation_json(const SearchSpace& space, const TuningReport& r, const TunerState& st, std::size_t i) {
  const auto& o = st.observations.at(i);
  json j;
  j["index"] = i;
  j["config"] = config_to_json(space, o.obs.config);
  j["metrics"] = metrics_to_json(*o.obs.metrics);
  if (r.reference) j["hypervolume"] = hv_single(r.objective.values(*o.obs.metrics), *r.reference);
  return j;
}

json report_json(const SearchSpace& space, const TuningReport& r, const TunerState& st) {
  json j;
  j["space"] = r.space;
  j["objective"] = r.objective.name();
  j["strategy"] = to_string(r.strategy);
  j["evaluations"] = r.evaluations;
  j["invalid"] = r.invalid;
  j["iterations"] = r.iterations;
  j["solver_suggestions"] = r.solver_suggestions;
  j["fallback_suggestions"] = r.fallback_suggestions;
  j["threshold"] = {{"final", r.final_delta}, {"min", r.min_delta}, {"max", r.max_delta}};
  json traj = json::array();
  for (const auto& s : st.trajectory) traj.push_back({{"iteration", s.iteration}, {"delta", s.delta}, {"streak", s.streak}});
  j["threshold_trajectory"] = traj;
  const auto& def = st.observations.front().obs;
  if (def.valid()) j["default"] = metrics_to_json(*def.metrics);
  if (r.best) j["best"] = observation_json(space, r, st, *r.best);
  if (r.objective.multi()) {
    json front = json::array();
    for (auto i : r.front) front.push_back(observation_json(space, r, st, i));
    j["front"] = front;
    if (r.reference) j["reference"] = {(*r.reference)[0], (*r.reference)[1]};
    j["front_hypervolume"] = r.front_hypervolume;
    if (r.max_hv) j["max_hypervolume"] = observation_json(space, r, st, *r.max_hv);
  }
  json rob = json::array();
  for (const auto& x : r.robustness) {
    json e{{"index", x.index}};
    if (x.metrics)
      e["worst_case"] = metrics_to_json(*x.metrics);
    else
      e["error"] = x.error;
    rob.push_back(e);
  }
  j["robustness"] = rob;
  return j;
}

std::string config_text(const SearchSpace& space, const Configuration& c) {
  std::string s;
  for (std::size_t i = 0; i < space.dim(); ++i) {
    if (i) s += ' ';
    s += space.param(i).name + "=" + to_string(c.values[i]);
  }
  return s;
}

void metrics_line(std::ostream& out, const char* label, const Metrics& m) {
  out << std::left << std::setw(14) << label << std::right << std::fixed << std::setprecision(4)
      << "throughput " << m.throughput << " req/s  tail " << m.tail_latency << " s  ttft " << m.ttft
      << " s  tpot " << m.tpot << " s\n";
}

}  // namespace

void write_report(std::ostream& out, const SearchSpace& space, const TuningReport& r, const TunerState& st,
                  ReportFormat format) {
  if (format == ReportFormat::json) {
    out << report_json(space, r, st).dump(2) << '\n';
    return;
  }
  if (format == ReportFormat::csv) {
    out << "index,iteration,source,valid,reason,throughput,tail_latency,ttft,tpot,pareto";
    for (const auto& p : space.params()) out << ',' << p.name;
    out << '\n';
    for (std::size_t i = 0; i < st.observations.size(); ++i) {
      const auto& o = st.observations[i];
      out << i << ',' << o.iteration << ',' << to_string(o.source) << ',' << (o.obs.valid() ? 1 : 0) << ',';
      if (!o.obs.valid()) out << to_string(o.obs.reason);
      out << std::setprecision(10);
      if (o.obs.valid())
        out << ',' << o.obs.metrics->throughput << ',' << o.obs.metrics->tail_latency << ',' << o.obs.metrics->ttft
            << ',' << o.obs.metrics->tpot;
      else
        out << ",,,,";
      out << ',' << (std::find(r.front.begin(), r.front.end(), i) != r.front.end() ? 1 : 0);
      for (const auto& v : o.obs.config.values) out << ',' << to_string(v);
      out << '\n';
    }
    return;
  }

  out << "space       " << r.space << "\n"
      << "objective   " << r.objective.name() << "\n"
      << "strategy    " << to_string(r.strategy) << "\n"
      << "evaluations " << r.evaluations << " (" << r.invalid << " invalid, " << r.iterations << " iterations, "
      << r.fallback_suggestions << " fallback suggestions)\n";
  out << std::fixed << std::setprecision(2) << "threshold   final " << r.final_delta << ", range [" << r.min_delta
      << ", " << r.max_delta << "]\n\n";
  const auto& def = st.observations.front().obs;
  if (def.valid()) metrics_line(out, "default", *def.metrics);
  if (r.best) {
    metrics_line(out, "best", *st.observations[*r.best].obs.metrics);
    out << "  #" << *r.best << "  " << config_text(space, st.observations[*r.best].obs.config) << "\n";
  }
  if (r.objective.multi()) {
    out << "\npareto front (" << r.front.size() << " points, hypervolume " << std::setprecision(6)
        << r.front_hypervolume << ")\n";
    out << std::setw(6) << "index" << std::setw(12) << "ttft" << std::setw(12) << "tpot" << std::setw(14)
        << "hypervolume" << "\n";
    for (auto i : r.front) {
      const auto& m = *st.observations[i].obs.metrics;
      const double hv = r.reference ? hv_single(r.objective.values(m), *r.reference) : 0.0;
      out << std::setw(6) << i << std::setw(12) << std::setprecision(4) << m.ttft << std::setw(12) << m.tpot
          << std::setw(14) << std::setprecision(6) << hv << (r.max_hv && *r.max_hv == i ? "  *" : "") << "\n";
    }
    if (r.max_hv)
      out << "  max-hypervolume pick #" << *r.max_hv << "  "
          << config_text(space, st.observations[*r.max_hv].obs.config) << "\n";
  }
  for (const auto& x : r.robustness) {
    out << "\nrobustness #" << x.index;
    if (x.metrics) {
      out << "\n";
      metrics_line(out, "worst case", *x.metrics);
    } else {
      out << ": failed (" << x.error << ")\n";
    }
  }
}

}  // namespace slotune
