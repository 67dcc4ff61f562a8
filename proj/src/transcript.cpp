// Copyright (c) 2026 the dilattn authors
// SPDX-License-Identifier: Apache-2.0

#include <sstream>

#include "dilattn/distributed.hpp"
#include "json.hpp"

namespace dilattn {

std::string CommTranscript::to_jsonl() const {
  std::ostringstream out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["device"] = r.device;
    j["phase"] = comm_phase_name(r.phase);
    j["pattern_index"] = r.pattern_index;
    j["elements_sent"] = r.elements_sent;
    j["elements_received"] = r.elements_received;
    j["elements_owned"] = r.elements_owned;
    j["group_size"] = r.group_size;
    out << j.dump() << '\n';
  }
  return out.str();
}

std::vector<CommReportRow> communication_report(
    const std::vector<std::pair<std::size_t, CommTranscript>>& transcripts_by_n) {
  std::vector<CommReportRow> rows;
  for (const auto& [n, transcript] : transcripts_by_n) {
    for (const auto& rec : transcript.records) {
      if (rec.phase != CommPhase::gather) continue;
      rows.push_back(CommReportRow{n, rec.device, rec.pattern_index,
                                   rec.elements_owned + rec.elements_received});
    }
  }
  return rows;
}

}  // namespace dilattn
