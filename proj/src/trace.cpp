#include "slotune/trace.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "slotune/errors.hpp"
#include "slotune/random.hpp"

namespace slotune {

using nlohmann::json;

std::uint64_t RequestTrace::digest() const {
  std::uint64_t h = hash_tag("trace");
  for (const auto& r : records) {
    h = mix64(h ^ static_cast<std::uint64_t>(r.input_tokens));
    h = mix64(h ^ static_cast<std::uint64_t>(r.output_tokens));
    if (r.prompt) h = mix64(h ^ hash_tag(*r.prompt));
  }
  return h;
}

RequestTrace longest_output_half(const RequestTrace& trace) {
  const std::size_t n = trace.records.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return trace.records[a].output_tokens > trace.records[b].output_tokens;
  });
  idx.resize((n + 1) / 2);
  std::sort(idx.begin(), idx.end());
  RequestTrace out;
  out.source = trace.source;
  for (auto i : idx) out.records.push_back(trace.records[i]);
  return out;
}

RequestTrace parse_trace(std::string_view text, std::string source) {
  RequestTrace t;
  t.source = std::move(source);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("trace line " + std::to_string(lineno) + ": " + e.what(), lineno);
    }
    auto length = [&](const char* key) {
      if (!j.is_object() || !j.contains(key) || !j[key].is_number_integer())
        throw ParseError("trace line " + std::to_string(lineno) + ": missing integer '" + key + "'", lineno);
      const auto v = j[key].get<std::int64_t>();
      if (v < 1 || v > 1'000'000)
        throw ParseError("trace line " + std::to_string(lineno) + ": '" + key + "' must be a positive token count",
                         lineno);
      return static_cast<int>(v);
    };
    TraceRecord r;
    r.input_tokens = length("input_tokens");
    r.output_tokens = length("output_tokens");
    if (j.contains("prompt")) {
      if (!j["prompt"].is_string())
        throw ParseError("trace line " + std::to_string(lineno) + ": 'prompt' must be a string", lineno);
      r.prompt = j["prompt"].get<std::string>();
    }
    t.records.push_back(std::move(r));
  }
  if (t.records.empty()) throw EmptyTrace("trace '" + t.source + "' has no records");
  return t;
}

RequestTrace load_trace(const std::filesystem::path& path, bool longest_half) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open trace " + path.string(), 0);
  std::stringstream ss;
  ss << in.rdbuf();
  RequestTrace t = parse_trace(ss.str(), path.filename().string());
  return longest_half ? longest_output_half(t) : t;
}

std::string trace_document(const RequestTrace& trace) {
  std::string out;
  for (const auto& r : trace.records) {
    json j;
    j["input_tokens"] = r.input_tokens;
    j["output_tokens"] = r.output_tokens;
    if (r.prompt) j["prompt"] = *r.prompt;
    out += j.dump();
    out += '\n';
  }
  return out;
}

RequestTrace synthetic_trace(std::string_view kind, std::size_t count, std::uint64_t seed) {
  // Log-normal lengths: median and log-sd for input and output, plus caps.
  struct Shape {
    double in_median, in_sigma, out_median, out_sigma;
    int in_cap, out_cap;
  };
  Shape s;
  if (kind == "bot")
    s = {220, 0.9, 180, 0.8, 3000, 1024};
  else if (kind == "sql")
    s = {900, 0.5, 60, 0.5, 3000, 400};
  else if (kind == "cls")
    s = {350, 0.6, 4, 0.5, 3000, 16};
  else if (kind == "rec")
    s = {500, 0.6, 120, 0.6, 3000, 600};
  else
    throw ValidationError("unknown trace kind '" + std::string(kind) + "' (bot, sql, cls, rec)");
  if (count < 1) throw ValidationError("synthetic trace needs at least one record");

  Rng rng(derive_seed(seed, kind));
  RequestTrace t;
  t.source = std::string(kind);
  for (std::size_t i = 0; i < count; ++i) {
    TraceRecord r;
    r.input_tokens = std::clamp(static_cast<int>(std::lround(s.in_median * std::exp(s.in_sigma * rng.normal()))), 1,
                                s.in_cap);
    r.output_tokens = std::clamp(
        static_cast<int>(std::lround(s.out_median * std::exp(s.out_sigma * rng.normal()))), 1, s.out_cap);
    t.records.push_back(r);
  }
  return t;
}

}  // namespace slotune
