#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "ioam/eh_scan.hpp"
#include "ioam/node.hpp"
#include "ioam/wire.hpp"

namespace ioam {

// Padding arithmetic for appending an option set into an existing EH.
// The existing tail padding is reusable only when it actually ends the EH.
struct InsertionPlan {
    uint32_t tailpad_size = 0;     // reusable existing tail padding
    uint32_t eh_notail_size = 0;   // EH size minus that padding
    uint32_t new_headpad_size = 0; // pad so options land at 4n
    uint32_t new_tailpad_size = 0; // pad so the EH ends at a multiple of 8
    uint32_t extra_room = 0;       // net packet growth
    uint32_t ioam_size = 0;        // option octets, head padding excluded
};

// ioam_size must be a positive multiple of 4, at least 12.
InsertionPlan plan_insertion(const ParsedEh* parsed, uint32_t ioam_size);

struct WallClock {
    uint32_t sec = 0;
    uint32_t subsec = 0;
};

struct TransitContext {
    uint32_t node_id = 0;
    const InterfaceConfig* in_if = nullptr;   // null: locally originated
    const InterfaceConfig* out_if = nullptr;  // null: locally delivered
    WallClock wall_clock{};
    uint8_t hop_limit_at_arrival = 0;
    uint64_t packet_seq = 0;  // feeds the e2e sequence number
    uint32_t namespace_data = 0;
};

NodeDataEntry make_node_data(const TransitContext& ctx);

struct DeleteStats {
    uint32_t splice_ops = 0;  // contiguous byte moves performed
    bool fast_path = false;   // whole EH removed at once
};

// Removes every recorded decap block. Requires parsed.free_idx >= 1.
// `parsed` is rewritten to describe the packet after deletion so a
// following insertion can reuse it without re-parsing.
DeleteStats delete_ioam(RawPacket& pkt, ParsedEh& parsed);

struct InsertStats {
    uint32_t inserted_bytes = 0;  // net packet growth
    bool fresh_eh = false;
};

// Splices the node's prebuilt option set for (out_dev, kind) into the
// packet; `parsed` may be null or EH-absent, selecting the fresh-EH case.
// The node's own node-data entry is written into slot 0 of every inserted
// trace without the ingress/namespace checks.
InsertStats insert_ioam(RawPacket& pkt, const RegisteredNode& node,
                        std::string_view out_dev, EhKind kind,
                        const ParsedEh* parsed, const TransitContext& ctx);

// One trace option located on the wire.
struct TraceOptionRef {
    uint32_t offset = 0;     // from packet start
    uint32_t total_len = 0;
    uint32_t eh_offset = 0;  // enclosing EH
    uint32_t eh_size = 0;
    uint16_t namespace_id = 0;
    TraceVariant variant = TraceVariant::PreAllocated;
    uint8_t node_len = 0;
    uint8_t flags = 0;
    uint8_t remaining_len = 0;
    uint16_t trace_type = 0;
};

std::optional<TraceOptionRef> locate_trace(const RawPacket& pkt,
                                           uint32_t eh_offset, uint32_t eh_size,
                                           uint32_t option_offset,
                                           const OptionCodes& codes);

struct UpdateResult {
    bool wrote = false;
    bool set_overflow = false;
    uint32_t grew_by = 0;  // incremental growth of the whole packet
};

// Writes this node's entry into the next slot when the input interface
// has the ingress role and the namespace is known; otherwise the packet
// is untouched. A full pre-allocated trace gets its overflow flag set.
UpdateResult update_trace(RawPacket& pkt, const TraceOptionRef& ref,
                          const RegisteredNode& node, const TransitContext& ctx);

struct TelemetryRecord {
    uint16_t namespace_id = 0;
    std::vector<NodeDataEntry> entries;  // hop order
    uint64_t packet_seq = 0;
    uint8_t flags = 0;  // wire flags at removal (bit 0: overflow)
};

class TelemetrySink {
public:
    virtual ~TelemetrySink() = default;
    virtual void capture(TelemetryRecord&& record) = 0;
};

struct ProcessResult {
    bool dropped = false;
    bool inserted = false;
    bool removed = false;
    bool updated = false;
    uint32_t splice_ops = 0;
    uint32_t inserted_bytes = 0;
    uint32_t records_emitted = 0;
    bool decap_overflow = false;
};

// Full per-packet pipeline for one node: scan, per-option trace update,
// decap (emitting one record per removed trace), then encap toward
// out_dev. Destination-EH options are examined only when the packet is
// addressed to this node. Malformed packets are marked dropped.
ProcessResult process_packet(const RegisteredNode& node, std::string_view in_dev,
                             std::string_view out_dev, RawPacket& pkt,
                             const WallClock& clock, uint64_t packet_seq,
                             TelemetrySink* sink, bool allow_encap = true);

}  // namespace ioam
