#include "dovis/wire.hpp"

#include <ostream>

#include <json.hpp>

#include "dovis/error.hpp"
#include "dovis/signing.hpp"

namespace dovis::oat {

using nlohmann::json;

namespace {

json optional_number(const std::optional<double> &v) { return v ? json(*v) : json(nullptr); }

const json &require(const json &obj, const char *field) {
    auto it = obj.find(field);
    if (it == obj.end()) {
        throw ValidationError(std::string("missing field '") + field + "'");
    }
    return *it;
}

double number_field(const json &obj, const char *field) {
    const auto &v = require(obj, field);
    if (!v.is_number()) {
        throw ValidationError(std::string("field '") + field + "' must be a number");
    }
    return v.get<double>();
}

std::optional<double> optional_number_field(const json &obj, const char *field) {
    auto it = obj.find(field);
    if (it == obj.end() || it->is_null()) {
        return std::nullopt;
    }
    if (!it->is_number()) {
        throw ValidationError(std::string("field '") + field + "' must be a number or null");
    }
    return it->get<double>();
}

std::string string_field(const json &obj, const char *field) {
    const auto &v = require(obj, field);
    if (!v.is_string()) {
        throw ValidationError(std::string("field '") + field + "' must be a string");
    }
    return v.get<std::string>();
}

std::int64_t epoch_field(const json &obj) {
    const auto &v = require(obj, "epoch_id");
    if (!v.is_number_integer()) {
        throw ValidationError("field 'epoch_id' must be an integer");
    }
    return v.get<std::int64_t>();
}

} // namespace

std::string to_json_line(const CallerReport &r) {
    // ordered_json keeps the schema's field order on the wire.
    nlohmann::ordered_json j;
    j["epoch_id"] = r.epoch_id;
    j["caller_id"] = r.caller_id;
    j["callee_id"] = r.callee_id;
    j["task_id"] = r.task_id;
    j["n_calls"] = r.n_calls;
    j["n_success"] = r.n_success;
    j["sum_quality"] = optional_number(r.sum_quality);
    j["sum_latency"] = optional_number(r.sum_latency);
    j["sum_cost"] = optional_number(r.sum_cost);
    j["sum_risk"] = optional_number(r.sum_risk);
    j["schema_version"] = r.schema_version;
    j["signature"] = r.signature.encode();
    return j.dump();
}

std::string to_json_line(const CalleeAck &a) {
    nlohmann::ordered_json j;
    j["epoch_id"] = a.epoch_id;
    j["callee_id"] = a.callee_id;
    j["task_id"] = a.task_id;
    j["n_calls_received"] = a.n_calls_received;
    j["schema_version"] = a.schema_version;
    j["signature"] = a.signature.encode();
    return j.dump();
}

WireRecord parse_record(std::string_view line) {
    json j;
    try {
        j = json::parse(line.begin(), line.end());
    } catch (const json::parse_error &e) {
        throw ValidationError(std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) {
        throw ValidationError("record must be a JSON object");
    }
    if (j.contains("n_calls_received")) {
        CalleeAck a;
        a.epoch_id = epoch_field(j);
        a.callee_id = string_field(j, "callee_id");
        a.task_id = string_field(j, "task_id");
        a.n_calls_received = number_field(j, "n_calls_received");
        a.schema_version = string_field(j, "schema_version");
        a.signature = Signature::decode(string_field(j, "signature"));
        return a;
    }
    CallerReport r;
    r.epoch_id = epoch_field(j);
    r.caller_id = string_field(j, "caller_id");
    r.callee_id = string_field(j, "callee_id");
    r.task_id = string_field(j, "task_id");
    r.n_calls = number_field(j, "n_calls");
    r.n_success = number_field(j, "n_success");
    r.sum_quality = optional_number_field(j, "sum_quality");
    r.sum_latency = optional_number_field(j, "sum_latency");
    r.sum_cost = optional_number_field(j, "sum_cost");
    r.sum_risk = optional_number_field(j, "sum_risk");
    r.schema_version = string_field(j, "schema_version");
    r.signature = Signature::decode(string_field(j, "signature"));
    return r;
}

void write_snapshot_csv(std::ostream &out, const AggregateSnapshot &snapshot) {
    auto cell = [](const std::optional<double> &v) { return v ? format_number(*v) : std::string{}; };
    out << "caller,callee,task,N,S,sum_q,sum_l,sum_c,sum_r\n";
    for (const auto &[key, st] : snapshot) {
        out << key.caller << ',' << key.callee << ',' << key.task << ',' << format_number(st.n) << ','
            << format_number(st.s) << ',' << cell(st.sum_q) << ',' << cell(st.sum_l) << ',' << cell(st.sum_c)
            << ',' << cell(st.sum_r) << '\n';
    }
}

} // namespace dovis::oat
