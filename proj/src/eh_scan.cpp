#include "ioam/eh_scan.hpp"

#include "ioam/bytes.hpp"

namespace ioam {

ParsedEh scan_eh(const RawPacket& pkt, EhKind kind, const RegisteredNode& node,
                 bool force_remove) {
    const auto bytes = pkt.bytes();
    const PacketView view = parse_packet(bytes);
    ParsedEh out;
    const EhRef* eh = view.find_eh(kind);
    if (!eh) return out;
    out.eh = Block{eh->offset, eh->size};

    OptionWalker walker(bytes.subspan(eh->offset, eh->size));
    try {
        while (auto item = walker.next()) {
            const uint32_t abs = eh->offset + item->offset;
            if (item->is_pad) {
                out.pad_size += item->total_len;
                out.last_pad = Block{abs, item->total_len};
                continue;
            }
            if (!node.codes().is_ioam(item->type) || item->data.size() < 2)
                continue;
            const uint16_t ns_id = read_u16(item->data, 0);
            const NamespaceConfig* ns = node.namespace_table().find(ns_id);
            if (!ns || !(ns->remove_on_transit || force_remove)) continue;
            if (out.free_idx >= kMaxNamespaces) {
                out.decap_overflow = true;
                continue;
            }
            out.decaps[out.free_idx++] = Block{abs, item->total_len};
            out.decap_size += item->total_len;
        }
    } catch (const Error& e) {
        if (e.code() == Errc::option_overrun)
            fail(Errc::malformed_eh, e.what(), e.offset());
        throw;
    }
    return out;
}

void attach_context(RawPacket& pkt, ParsedEh& parsed) {
    if (pkt.context())
        fail(Errc::context_already_attached, "packet already carries a parse context");
    pkt.context() = &parsed;
}

ParsedEh* context_of(const RawPacket& pkt) {
    return static_cast<ParsedEh*>(pkt.context());
}

void detach_context(RawPacket& pkt) {
    pkt.context() = nullptr;
}

}  // namespace ioam
