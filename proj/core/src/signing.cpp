#include "dovis/signing.hpp"

#include <sodium.h>

#include <charconv>
#include <cmath>

#include "dovis/error.hpp"

namespace dovis::oat {

namespace {

constexpr char kSep = '\x1f';

void ensure_sodium() {
    static const int rc = sodium_init();
    if (rc < 0) {
        throw Error("libsodium failed to initialize");
    }
}

void append_field(std::string &out, std::string_view field) {
    out.append(field);
    out.push_back(kSep);
}

void append_optional(std::string &out, const std::optional<double> &v) {
    append_field(out, v ? format_number(*v) : std::string{});
}

} // namespace

std::string format_number(double value) {
    if (value == 0.0) {
        return "0"; // folds -0 into 0 so the payload is sign-agnostic for zero
    }
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc{}) {
        throw Error("format_number: conversion failed");
    }
    return std::string(buf, ptr);
}

std::string canonical_payload(const CallerReport &report) {
    std::string out;
    out.reserve(160);
    append_field(out, std::to_string(report.epoch_id));
    append_field(out, report.caller_id);
    append_field(out, report.callee_id);
    append_field(out, report.task_id);
    append_field(out, format_number(report.n_calls));
    append_field(out, format_number(report.n_success));
    append_optional(out, report.sum_quality);
    append_optional(out, report.sum_latency);
    append_optional(out, report.sum_cost);
    append_optional(out, report.sum_risk);
    out.append(report.schema_version);
    return out;
}

std::string canonical_payload(const CalleeAck &ack) {
    std::string out;
    append_field(out, std::to_string(ack.epoch_id));
    append_field(out, ack.callee_id);
    append_field(out, ack.task_id);
    append_field(out, format_number(ack.n_calls_received));
    out.append(ack.schema_version);
    return out;
}

std::string to_hex(const unsigned char *data, std::size_t size) {
    static constexpr char kDigits[] = "0123456789abcdef";
    std::string out(size * 2, '0');
    for (std::size_t i = 0; i < size; ++i) {
        out[2 * i] = kDigits[data[i] >> 4];
        out[2 * i + 1] = kDigits[data[i] & 0xF];
    }
    return out;
}

SigningKey key_from_hex(std::string_view hex) {
    SigningKey key{};
    if (hex.size() != key.size() * 2) {
        throw ValidationError("signing key must be 64 hex digits");
    }
    for (std::size_t i = 0; i < key.size(); ++i) {
        unsigned value = 0;
        const auto *first = hex.data() + 2 * i;
        const auto [ptr, ec] = std::from_chars(first, first + 2, value, 16);
        if (ec != std::errc{} || ptr != first + 2) {
            throw ValidationError("signing key contains a non-hex digit");
        }
        key[i] = static_cast<unsigned char>(value);
    }
    return key;
}

void HmacKeyring::register_key(std::string agent_id, const SigningKey &key) {
    keys_.insert_or_assign(std::move(agent_id), key);
}

bool HmacKeyring::has_key(std::string_view agent_id) const { return keys_.find(agent_id) != keys_.end(); }

const SigningKey &HmacKeyring::key_for(std::string_view agent_id) const {
    auto it = keys_.find(agent_id);
    if (it == keys_.end()) {
        throw InvalidArgument("no signing key registered for '" + std::string(agent_id) + "'");
    }
    return it->second;
}

std::string HmacKeyring::tag(const SigningKey &key, std::string_view payload, std::uint64_t signed_at) const {
    ensure_sodium();
    crypto_auth_hmacsha256_state state;
    crypto_auth_hmacsha256_init(&state, key.data(), key.size());
    crypto_auth_hmacsha256_update(&state, reinterpret_cast<const unsigned char *>(payload.data()),
                                  payload.size());
    const std::string suffix = std::string(1, kSep) + std::to_string(signed_at);
    crypto_auth_hmacsha256_update(&state, reinterpret_cast<const unsigned char *>(suffix.data()), suffix.size());
    unsigned char out[crypto_auth_hmacsha256_BYTES];
    crypto_auth_hmacsha256_final(&state, out);
    return to_hex(out, sizeof(out));
}

void HmacKeyring::sign(CallerReport &report, std::uint64_t signed_at) const {
    report.signature.signed_at = signed_at;
    report.signature.mac = tag(key_for(report.caller_id), canonical_payload(report), signed_at);
}

void HmacKeyring::sign(CalleeAck &ack, std::uint64_t signed_at) const {
    ack.signature.signed_at = signed_at;
    ack.signature.mac = tag(key_for(ack.callee_id), canonical_payload(ack), signed_at);
}

bool HmacKeyring::verify(std::string_view signer_id, std::string_view payload, const Signature &signature) const {
    auto it = keys_.find(signer_id);
    if (it == keys_.end()) {
        return false;
    }
    const std::string expected = tag(it->second, payload, signature.signed_at);
    if (expected.size() != signature.mac.size()) {
        return false;
    }
    return sodium_memcmp(expected.data(), signature.mac.data(), expected.size()) == 0;
}

SigningKey HmacKeyring::derive_key(std::string_view master_secret, std::string_view agent_id) {
    ensure_sodium();
    unsigned char master[crypto_hash_sha256_BYTES];
    crypto_hash_sha256(master, reinterpret_cast<const unsigned char *>(master_secret.data()), master_secret.size());
    SigningKey key{};
    crypto_auth_hmacsha256(key.data(), reinterpret_cast<const unsigned char *>(agent_id.data()), agent_id.size(),
                           master);
    return key;
}

} // namespace dovis::oat
