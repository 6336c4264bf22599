#pragma once

#include <array>
#include <optional>

#include "ioam/node.hpp"
#include "ioam/wire.hpp"

namespace ioam {

struct Block {
    uint32_t offset = 0;  // from packet start
    uint32_t size = 0;

    bool operator==(const Block&) const = default;
};

// Per-packet parse context for one EH kind. decaps is fixed-capacity so
// the scan allocates nothing on the packet path.
struct ParsedEh {
    std::optional<Block> eh;
    std::optional<Block> last_pad;  // final padding option, if any
    uint32_t pad_size = 0;          // every Pad1/PadN octet in the EH
    uint32_t decap_size = 0;        // total octets to remove
    uint8_t free_idx = 0;           // next free decap slot == block count
    std::array<Block, kMaxNamespaces> decaps{};
    bool decap_overflow = false;    // more removable options than slots

    std::span<const Block> decap_blocks() const {
        return {decaps.data(), free_idx};
    }
};

// Single pass over the EH of the given kind (absent EH yields an empty
// context). Options in a namespace the node knows are recorded for
// removal when the namespace is flagged remove-on-transit, or
// unconditionally under force_remove (domain-egress behavior).
// Throws Errc::malformed_eh on option overrun.
ParsedEh scan_eh(const RawPacket& pkt, EhKind kind, const RegisteredNode& node,
                 bool force_remove = false);

// The context travels with the packet between deletion and insertion so
// nothing is parsed twice; at most one context per packet at a time.
void attach_context(RawPacket& pkt, ParsedEh& parsed);
ParsedEh* context_of(const RawPacket& pkt);
void detach_context(RawPacket& pkt);

}  // namespace ioam
