#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <variant>

#include "dovis/telemetry.hpp"

namespace dovis::oat {

/// One line of the report stream. Acknowledgments are recognized by the
/// presence of `n_calls_received`.
using WireRecord = std::variant<CallerReport, CalleeAck>;

std::string to_json_line(const CallerReport &report);
std::string to_json_line(const CalleeAck &ack);

/// Throws ValidationError on malformed JSON, missing mandatory fields or
/// wrongly typed values. Optional sums may be null or omitted.
WireRecord parse_record(std::string_view line);

/// CSV with header `caller,callee,task,N,S,sum_q,sum_l,sum_c,sum_r`;
/// absent sums are written as empty cells.
void write_snapshot_csv(std::ostream &out, const AggregateSnapshot &snapshot);

} // namespace dovis::oat
