#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace slotune {

struct TraceRecord {
  int input_tokens = 0;
  int output_tokens = 0;
  std::optional<std::string> prompt;
};

struct RequestTrace {
  std::vector<TraceRecord> records;
  std::string source;

  std::size_t size() const noexcept { return records.size(); }
  /// Stable digest of the lengths and prompts.
  std::uint64_t digest() const;
};

/// Keeps the ceil(n/2) records with the longest outputs, in their original order.
RequestTrace longest_output_half(const RequestTrace& trace);

/// Parses one JSON object per line: {"input_tokens": int, "output_tokens": int, "prompt"?: string}.
/// Blank lines are skipped. Throws ParseError (with 1-based line) or EmptyTrace.
RequestTrace parse_trace(std::string_view text, std::string source = "inline");
RequestTrace load_trace(const std::filesystem::path& path, bool longest_half = false);
std::string trace_document(const RequestTrace& trace);

/// Workload shapes for synthetic traces: "bot" (chat), "sql" (long prompt, short answer),
/// "cls" (classification, tiny output), "rec" (recommendation, medium both).
RequestTrace synthetic_trace(std::string_view kind, std::size_t count, std::uint64_t seed);

}  // namespace slotune
