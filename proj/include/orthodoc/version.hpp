#pragma once

namespace orthodoc {

inline constexpr const char* kEngineVersion = "0.1.0";
inline constexpr int kConfigSchemaVersion = 1;
inline constexpr int kStoreSchemaVersion = 1;
inline constexpr int kGraphSchemaVersion = 1;
inline constexpr int kIndexSchemaVersion = 1;
inline constexpr int kWeightsSchemaVersion = 1;
inline constexpr int kReportSchemaVersion = 1;
// Prompt grammar version, stamped on the first line of every prompt.
inline constexpr const char* kPromptGrammar = "ORTHODOC-PROMPT/1";

} // namespace orthodoc
