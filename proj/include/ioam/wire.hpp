#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ioam/errors.hpp"

namespace ioam {

inline constexpr std::size_t kIpv6HeaderSize = 40;
inline constexpr std::size_t kMaxNamespaces = 32;
inline constexpr std::size_t kMaxInterfaces = 16;
inline constexpr std::size_t kNsBucketCount = 4 * kMaxNamespaces;

// IPv6 protocol numbers used by the codec.
inline constexpr uint8_t kProtoHopByHop = 0;
inline constexpr uint8_t kProtoUdp = 17;
inline constexpr uint8_t kProtoNoNext = 59;
inline constexpr uint8_t kProtoDestination = 60;

enum class EhKind : uint8_t { HopByHop, Destination };

uint8_t protocol_code(EhKind kind);
std::optional<EhKind> eh_kind_from_protocol(uint8_t proto);
const char* eh_kind_name(EhKind kind);

// Option type code points. Drafts never assigned stable values, so these
// are explicit and can be overridden per node.
struct OptionCodes {
    uint8_t incremental_trace = 0x30;
    uint8_t prealloc_trace = 0x31;
    uint8_t pot = 0x32;
    uint8_t e2e = 0x33;

    bool is_ioam(uint8_t type) const {
        return type == incremental_trace || type == prealloc_trace ||
               type == pot || type == e2e;
    }
};

inline constexpr OptionCodes kDefaultCodes{};

using Ipv6Addr = std::array<uint8_t, 16>;

Ipv6Addr make_addr(uint16_t prefix_word, uint16_t host);
std::string addr_to_string(const Ipv6Addr& addr);
Ipv6Addr parse_addr(std::string_view text);  // supports ::-compression

struct Ipv6HeaderView {
    uint32_t version_tc_flow = 6u << 28;
    uint16_t payload_length = 0;  // total bytes - 40
    uint8_t next_header = kProtoNoNext;
    uint8_t hop_limit = 64;
    Ipv6Addr src{};
    Ipv6Addr dst{};
};

struct EhRef {
    EhKind kind = EhKind::HopByHop;
    uint32_t offset = 0;  // from packet start
    uint32_t size = 0;    // (ext_len + 1) * 8
};

// Offsets-only view of one parsed packet; never owns memory.
struct PacketView {
    Ipv6HeaderView hdr;
    std::array<EhRef, 8> eh_chain{};
    uint32_t eh_count = 0;
    uint32_t payload_offset = 0;
    uint32_t payload_size = 0;
    uint8_t payload_protocol = kProtoNoNext;

    const EhRef* find_eh(EhKind kind) const {
        for (uint32_t i = 0; i < eh_count; ++i)
            if (eh_chain[i].kind == kind) return &eh_chain[i];
        return nullptr;
    }
};

// Mutable packet buffer with spare prefix space so the datapath can grow
// packets in place. Growing past the headroom reallocates and bumps a
// counter the caller can observe.
class RawPacket {
public:
    RawPacket() = default;
    RawPacket(std::span<const uint8_t> bytes, std::size_t headroom);

    RawPacket(RawPacket&&) noexcept = default;
    RawPacket& operator=(RawPacket&&) noexcept = default;
    RawPacket(const RawPacket&) = delete;
    RawPacket& operator=(const RawPacket&) = delete;

    RawPacket clone() const;

    std::span<uint8_t> bytes() {
        return {store_.data() + front_, len_};
    }
    std::span<const uint8_t> bytes() const {
        return {store_.data() + front_, len_};
    }
    std::size_t size() const { return len_; }
    std::size_t headroom_capacity() const { return front_; }
    uint64_t realloc_count() const { return reallocs_; }

    // Inserts an n-octet gap at packet offset `at` by shifting [0, at)
    // into the headroom; reallocates only when the headroom is too small.
    void open_gap(std::size_t at, std::size_t n);

    // Drops [at, at + n) by shifting [0, at) right.
    void remove_region(std::size_t at, std::size_t n);

    // Per-packet scratch slot for a parse context (one at a time).
    void*& context() { return cb_; }
    void* context() const { return cb_; }

private:
    std::vector<uint8_t> store_;
    std::size_t front_ = 0;
    std::size_t len_ = 0;
    uint64_t reallocs_ = 0;
    void* cb_ = nullptr;
};

// ---------------------------------------------------------------------------
// decoded options

enum class TraceVariant : uint8_t { PreAllocated, Incremental };

// trace_type bits; each selected field adds one 4-octet word per entry.
inline constexpr uint16_t kTraceHopNode = 1u << 0;   // hop limit + node id
inline constexpr uint16_t kTraceIfIds = 1u << 1;     // ingress + egress if ids
inline constexpr uint16_t kTraceTsSec = 1u << 2;     // timestamp seconds
inline constexpr uint16_t kTraceTsSubsec = 1u << 3;  // timestamp subseconds
inline constexpr uint16_t kTraceNsData = 1u << 4;    // namespace-specific data
inline constexpr uint16_t kTraceMaskAll = 0x1f;

struct NodeDataEntry {
    uint8_t hop_limit = 0;
    uint32_t node_id = 0;  // 24 bits on the wire
    uint16_t ingress_if_id = 0;
    uint16_t egress_if_id = 0;
    uint32_t timestamp_sec = 0;
    uint32_t timestamp_subsec = 0;
    uint32_t namespace_specific = 0;

    bool operator==(const NodeDataEntry&) const = default;
};

struct IoamTraceOption {
    TraceVariant variant = TraceVariant::PreAllocated;
    uint16_t namespace_id = 0;
    uint8_t node_len = 0;       // 4-octet words per entry
    uint8_t flags = 0;          // bit 0: overflow
    uint8_t remaining_len = 0;  // free entry slots
    uint16_t trace_type = 0;
    std::vector<NodeDataEntry> node_data;  // occupied entries, hop order

    std::size_t capacity() const { return node_data.size() + remaining_len; }
    bool overflow() const { return (flags & 1u) != 0; }

    bool operator==(const IoamTraceOption&) const = default;
};

inline constexpr uint16_t kE2eSeqNum = 1u << 0;

struct IoamE2EOption {
    uint16_t namespace_id = 0;
    uint16_t e2e_type = 0;  // bit 0: sequence number
    uint64_t seq_num = 0;

    bool operator==(const IoamE2EOption&) const = default;
};

struct IoamPotOption {
    uint16_t namespace_id = 0;
    std::vector<uint8_t> opaque_body;  // never interpreted

    bool operator==(const IoamPotOption&) const = default;
};

enum class EhOptionKind : uint8_t { Pad1, PadN, IoamTrace, IoamPot, IoamE2E, Unknown };

const char* option_kind_name(EhOptionKind kind);

struct EhOption {
    EhOptionKind kind = EhOptionKind::Unknown;
    uint8_t type = 0;
    uint32_t offset = 0;     // from EH start
    uint32_t total_len = 0;  // including type+len octets (1 for Pad1)
    std::vector<uint8_t> body;  // raw data octets, preserved verbatim

    std::optional<IoamTraceOption> trace;
    std::optional<IoamE2EOption> e2e;
    std::optional<IoamPotOption> pot;
};

// Zero-allocation walk over the option area of one extension header.
// Input spans the whole EH including its 2-octet header.
class OptionWalker {
public:
    struct Item {
        uint8_t type = 0;
        uint32_t offset = 0;  // from EH start
        uint32_t total_len = 0;
        bool is_pad = false;
        std::span<const uint8_t> data;  // option data octets
    };

    explicit OptionWalker(std::span<const uint8_t> eh_bytes)
        : eh_(eh_bytes), pos_(2) {}

    // Throws Errc::option_overrun when a declared length crosses the EH end.
    std::optional<Item> next();

private:
    std::span<const uint8_t> eh_;
    std::size_t pos_;
};

// ---------------------------------------------------------------------------
// operations

PacketView parse_packet(std::span<const uint8_t> bytes);

std::vector<EhOption> parse_options(std::span<const uint8_t> eh_bytes,
                                    const OptionCodes& codes = kDefaultCodes);

std::vector<uint8_t> encode_trace_option(const IoamTraceOption& opt,
                                         const OptionCodes& codes = kDefaultCodes);
std::vector<uint8_t> encode_e2e_option(const IoamE2EOption& opt,
                                       const OptionCodes& codes = kDefaultCodes);
std::vector<uint8_t> encode_pot_option(const IoamPotOption& opt,
                                       const OptionCodes& codes = kDefaultCodes);

// Octets one node entry occupies for this trace-type mask (4 per set bit).
uint32_t node_data_len(uint16_t trace_type);

// Smallest p >= 0 with (current_offset + p) == align_y (mod align_x).
uint32_t head_padding(uint32_t current_offset, uint32_t align_x, uint32_t align_y);

std::vector<uint8_t> encode_padding(uint32_t len);

// In-place variant; writes a Pad1/PadN option covering exactly out.size().
void write_padding(std::span<uint8_t> out);

// Serializes one node entry (fields in ascending trace-type bit order).
void write_node_data(std::span<uint8_t> out, uint16_t trace_type,
                     const NodeDataEntry& entry);
NodeDataEntry read_node_data(std::span<const uint8_t> in, uint16_t trace_type);

// ---------------------------------------------------------------------------
// structural whole-packet codec (fixtures, inspection, round-trip checks)

struct DecodedEh {
    EhKind kind = EhKind::HopByHop;
    std::vector<EhOption> options;
};

struct DecodedPacket {
    uint32_t version_tc_flow = 6u << 28;
    uint8_t hop_limit = 64;
    Ipv6Addr src{};
    Ipv6Addr dst{};
    uint8_t payload_protocol = kProtoUdp;
    std::vector<DecodedEh> ehs;
    std::vector<uint8_t> payload;
};

DecodedPacket decode_packet(std::span<const uint8_t> bytes,
                            const OptionCodes& codes = kDefaultCodes);
std::vector<uint8_t> encode_packet(const DecodedPacket& pkt,
                                   const OptionCodes& codes = kDefaultCodes);

std::vector<uint8_t> encode_option(const EhOption& opt);

// Assembles one EH from options; validates the two alignment invariants
// (IOAM type octets at 4n, total length a multiple of 8).
std::vector<uint8_t> encode_eh(uint8_t next_header,
                               const std::vector<EhOption>& options,
                               const OptionCodes& codes = kDefaultCodes);

// ---------------------------------------------------------------------------
// hex fixtures: one packet per line, lowercase hex, no separators

std::string to_hex(std::span<const uint8_t> bytes);
std::vector<uint8_t> from_hex(std::string_view text);

std::vector<std::vector<uint8_t>> read_hex_fixture(const std::string& path);
void write_hex_fixture(const std::string& path,
                       const std::vector<std::vector<uint8_t>>& packets);

}  // namespace ioam
