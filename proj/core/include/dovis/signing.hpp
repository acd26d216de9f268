#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>

#include "dovis/telemetry.hpp"

namespace dovis::oat {

/// Canonical byte string covered by a record's signature: the wire fields in
/// schema order (signature excluded), joined by U+001F, numbers in shortest
/// round-trip decimal, absent optional fields as the empty string.
std::string canonical_payload(const CallerReport &report);
std::string canonical_payload(const CalleeAck &ack);

/// Shortest decimal that round-trips to the same double.
std::string format_number(double value);

using SigningKey = std::array<unsigned char, 32>;

/// HMAC-SHA256 reference scheme. The tag covers the canonical payload
/// followed by the signing timestamp.
class HmacKeyring final : public SignatureVerifier {
public:
    void register_key(std::string agent_id, const SigningKey &key);
    bool has_key(std::string_view agent_id) const;
    const SigningKey &key_for(std::string_view agent_id) const;

    void sign(CallerReport &report, std::uint64_t signed_at) const;
    void sign(CalleeAck &ack, std::uint64_t signed_at) const;

    bool verify(std::string_view signer_id, std::string_view payload,
                const Signature &signature) const override;

    const std::map<std::string, SigningKey, std::less<>> &keys() const noexcept { return keys_; }

    /// Deterministic per-agent key derived from a master secret.
    static SigningKey derive_key(std::string_view master_secret, std::string_view agent_id);

private:
    std::string tag(const SigningKey &key, std::string_view payload, std::uint64_t signed_at) const;

    std::map<std::string, SigningKey, std::less<>> keys_;
};

/// Accepts every signature. For offline replays of trusted streams only.
class AcceptAllVerifier final : public SignatureVerifier {
public:
    bool verify(std::string_view, std::string_view, const Signature &) const override { return true; }
};

std::string to_hex(const unsigned char *data, std::size_t size);
SigningKey key_from_hex(std::string_view hex);

} // namespace dovis::oat
