#include <fstream>
#include <sstream>

#include "slotune/errors.hpp"
#include "slotune/tuner.hpp"

namespace slotune {

using nlohmann::json;

struct FileRunLog::Impl {
  std::ofstream out;
};

FileRunLog::FileRunLog(const std::filesystem::path& path) : impl_(std::make_unique<Impl>()) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  impl_->out.open(path, std::ios::binary | std::ios::trunc);
  if (!impl_->out) throw Error("cannot write run log " + path.string());
}

FileRunLog::~FileRunLog() = default;

void FileRunLog::write(const json& record) {
  impl_->out << record.dump() << '\n';
  impl_->out.flush();
}

std::string MemoryRunLog::text() const {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  return s;
}

json config_to_json(const SearchSpace& space, const Configuration& c) {
  json j = json::object();
  for (std::size_t i = 0; i < space.dim(); ++i)
    std::visit([&](const auto& v) { j[space.param(i).name] = v; }, c.values.at(i));
  return j;
}

Configuration config_from_json(const SearchSpace& space, const json& j) {
  if (!j.is_object()) throw SchemaError("configuration must be an object");
  Configuration c;
  for (const auto& p : space.params()) {
    if (!j.contains(p.name)) throw SchemaError("configuration lacks parameter '" + p.name + "'");
    const json& v = j[p.name];
    Value val;
    if (v.is_boolean())
      val = v.get<bool>();
    else if (v.is_number_integer() && p.kind != ParamKind::real)
      val = v.get<std::int64_t>();
    else if (v.is_number())
      val = v.get<double>();
    else if (v.is_string())
      val = v.get<std::string>();
    else
      throw SchemaError("parameter '" + p.name + "' has an unsupported value");
    if (!p.contains(val)) throw ValidationError("value " + v.dump() + " is outside parameter '" + p.name + "'");
    c.values.push_back(std::move(val));
  }
  if (j.size() != space.dim()) throw SchemaError("configuration has parameters the space does not declare");
  return c;
}

json metrics_to_json(const Metrics& m) {
  return {{"throughput", m.throughput}, {"tail_latency", m.tail_latency}, {"ttft", m.ttft}, {"tpot", m.tpot}};
}

Metrics metrics_from_json(const json& j) {
  Metrics m;
  m.throughput = j.at("throughput").get<double>();
  m.tail_latency = j.at("tail_latency").get<double>();
  m.ttft = j.at("ttft").get<double>();
  m.tpot = j.at("tpot").get<double>();
  return m;
}

json header_record(const RunContext& ctx) {
  const TunerConfig& c = ctx.config;
  json h;
  h["type"] = "header";
  h["format"] = 1;
  h["space"] = json::parse(space_document(*ctx.space));
  h["space_digest"] = ctx.space->digest();
  h["objective"] = c.objective.name();
  h["strategy"] = to_string(c.strategy);
  h["budget"] = c.budget;
  h["parallel"] = c.parallel;
  h["initial"] = c.initial_count(*ctx.space);
  h["seed"] = c.seed;
  h["profile"] = {{"duration", c.profile.duration},   {"request_rate", c.profile.request_rate},
                  {"repeats", c.profile.repeats},     {"percentile", c.profile.percentile},
                  {"drain_factor", c.profile.drain_factor}};
  h["solver"] = {{"population", c.solver.population},        {"generations", c.solver.generations},
                 {"crossover_rate", c.solver.crossover_rate}, {"mutation_rate", c.solver.mutation_rate},
                 {"crossover_eta", c.solver.crossover_eta},   {"mutation_eta", c.solver.mutation_eta}};
  h["forest"] = {{"trees", c.forest.trees},
                 {"max_depth", c.forest.max_depth},
                 {"min_samples_leaf", c.forest.min_samples_leaf},
                 {"bootstrap", c.forest.bootstrap}};
  h["gp_restarts"] = c.gp_restarts;
  h["literal_beta"] = c.literal_beta;
  h["robustness"] = c.robustness;
  h["evaluator"] = c.evaluator;
  h["evaluator_options"] = ctx.evaluator_info;
  h["trace"] = ctx.trace_info;
  return h;
}

namespace {

TunerConfig config_from_header(const json& h, const SearchSpace& space) {
  TunerConfig c;
  c.objective = ObjectiveSpec::parse(h.at("objective").get<std::string>());
  c.strategy = parse_strategy(h.at("strategy").get<std::string>());
  c.budget = h.at("budget").get<std::size_t>();
  c.parallel = h.at("parallel").get<std::size_t>();
  c.initial = h.at("initial").get<std::size_t>();
  c.seed = h.at("seed").get<std::uint64_t>();
  const json& p = h.at("profile");
  c.profile.duration = p.at("duration").get<double>();
  c.profile.request_rate = p.at("request_rate").get<double>();
  c.profile.repeats = p.at("repeats").get<int>();
  c.profile.percentile = p.at("percentile").get<double>();
  c.profile.drain_factor = p.at("drain_factor").get<double>();
  const json& s = h.at("solver");
  c.solver.population = s.at("population").get<int>();
  c.solver.generations = s.at("generations").get<int>();
  c.solver.crossover_rate = s.at("crossover_rate").get<double>();
  c.solver.mutation_rate = s.at("mutation_rate").get<double>();
  c.solver.crossover_eta = s.at("crossover_eta").get<double>();
  c.solver.mutation_eta = s.at("mutation_eta").get<double>();
  const json& f = h.at("forest");
  c.forest.trees = f.at("trees").get<int>();
  c.forest.max_depth = f.at("max_depth").get<int>();
  c.forest.min_samples_leaf = f.at("min_samples_leaf").get<int>();
  c.forest.bootstrap = f.at("bootstrap").get<bool>();
  c.gp_restarts = h.at("gp_restarts").get<int>();
  c.literal_beta = h.at("literal_beta").get<bool>();
  c.robustness = h.at("robustness").get<bool>();
  c.evaluator = h.at("evaluator").get<std::string>();
  (void)space;
  return c;
}

}  // namespace

ReplayedRun replay_log(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t record = 0;
  std::optional<ReplayedRun> run;
  ThresholdState expected;
  std::vector<bool> pending;  // outcomes of the current iteration
  int pending_iteration = -1;
  bool ended = false;

  auto corrupt = [&](const std::string& why) -> LogCorrupt {
    return LogCorrupt("run log record " + std::to_string(record) + ": " + why, record);
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (ended) throw corrupt("record after the end record");
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw corrupt(std::string("malformed record (") + e.what() + ")");
    }
    try {
      const std::string type = j.at("type").get<std::string>();
      if (record == 0) {
        if (type != "header") throw corrupt("first record must be the header");
        SearchSpace space = parse_space(j.at("space").dump());
        TunerConfig cfg = config_from_header(j, space);
        run.emplace(ReplayedRun{j, std::move(space), cfg, TunerState{}, false});
      } else if (type == "obs") {
        TunerState& st = run->state;
        if (j.at("index").get<std::size_t>() != st.observations.size()) throw corrupt("observation index out of order");
        LoggedObservation lo;
        lo.iteration = j.at("iteration").get<int>();
        lo.source = parse_source(j.at("source").get<std::string>());
        lo.obs.config = config_from_json(run->space, j.at("config"));
        if (j.at("valid").get<bool>())
          lo.obs.metrics = metrics_from_json(j.at("metrics"));
        else
          lo.obs.reason = parse_invalid_reason(j.at("reason").get<std::string>());
        lo.obs.wall_time = j.at("wall_time").get<double>();
        lo.obs.seed = j.at("seed").get<std::uint64_t>();
        if (lo.iteration != pending_iteration) {
          pending.clear();
          pending_iteration = lo.iteration;
        }
        pending.push_back(lo.obs.valid());
        st.iterations = std::max(st.iterations, lo.iteration);
        if (lo.source == Source::solver || lo.source == Source::fallback) {
          // One solver call per suggestion iteration.
          if (st.observations.empty() || st.observations.back().iteration != lo.iteration) ++st.solver_calls;
        }
        st.observations.push_back(std::move(lo));
      } else if (type == "threshold") {
        ThresholdStep s{j.at("iteration").get<int>(), j.at("delta").get<double>(), j.at("streak").get<int>()};
        if (s.iteration != pending_iteration) throw corrupt("threshold record for an iteration without observations");
        expected.update(pending);
        if (expected.delta != s.delta || expected.streak != s.streak)
          throw corrupt("threshold step does not follow from the batch outcomes");
        run->state.trajectory.push_back(s);
        run->state.threshold = expected;
      } else if (type == "robustness") {
        RobustnessRecord r;
        r.index = j.at("index").get<std::size_t>();
        if (r.index >= run->state.observations.size()) throw corrupt("robustness record for an unknown observation");
        if (j.contains("metrics"))
          r.metrics = metrics_from_json(j.at("metrics"));
        else
          r.error = j.at("error").get<std::string>();
        run->state.robustness.push_back(std::move(r));
      } else if (type == "end") {
        if (j.at("observations").get<std::size_t>() != run->state.observations.size())
          throw corrupt("end record disagrees with the observation count");
        ended = true;
      } else {
        throw corrupt("unknown record type '" + type + "'");
      }
    } catch (const LogCorrupt&) {
      throw;
    } catch (const std::exception& e) {
      throw corrupt(e.what());
    }
    ++record;
  }
  if (!run) throw LogCorrupt("run log is empty", 0);
  if (!ended) throw LogCorrupt("run log is truncated (no end record)", record);
  run->finished = true;
  return std::move(*run);
}

ReplayedRun replay_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogCorrupt("cannot open run log " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  return replay_log(ss.str());
}

}  // namespace slotune
