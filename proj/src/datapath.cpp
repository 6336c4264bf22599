#include "ioam/datapath.hpp"

#include <algorithm>
#include <cstring>

#include "ioam/bytes.hpp"

namespace ioam {

namespace {

constexpr uint32_t kTraceFixedLen = 10;  // type + len + 8-octet trace header

// Offset of the next-header octet pointing at the EH starting at eh_offset.
std::size_t prev_nh_field(std::span<const uint8_t> bytes, std::size_t eh_offset) {
    std::size_t field = 6;
    std::size_t off = kIpv6HeaderSize;
    while (off < eh_offset) {
        field = off;
        off += (static_cast<std::size_t>(bytes[off + 1]) + 1) * 8;
    }
    return field;
}

void refresh_padding_info(const RawPacket& pkt, ParsedEh& parsed) {
    parsed.pad_size = 0;
    parsed.last_pad.reset();
    const Block eh = *parsed.eh;
    OptionWalker walker(pkt.bytes().subspan(eh.offset, eh.size));
    while (auto item = walker.next()) {
        if (!item->is_pad) continue;
        parsed.pad_size += item->total_len;
        parsed.last_pad = Block{eh.offset + item->offset, item->total_len};
    }
}

struct ContextGuard {
    RawPacket& pkt;
    explicit ContextGuard(RawPacket& p, ParsedEh& parsed) : pkt(p) {
        attach_context(p, parsed);
    }
    ~ContextGuard() { detach_context(pkt); }
};

}  // namespace

NodeDataEntry make_node_data(const TransitContext& ctx) {
    NodeDataEntry e;
    e.hop_limit = ctx.hop_limit_at_arrival;
    e.node_id = ctx.node_id & 0xffffffu;
    e.ingress_if_id = ctx.in_if ? ctx.in_if->ioam_if_id : 0;
    e.egress_if_id = ctx.out_if ? ctx.out_if->ioam_if_id : 0;
    e.timestamp_sec = ctx.wall_clock.sec;
    e.timestamp_subsec = ctx.wall_clock.subsec;
    e.namespace_specific = ctx.namespace_data;
    return e;
}

InsertionPlan plan_insertion(const ParsedEh* parsed, uint32_t ioam_size) {
    if (ioam_size % 4 != 0 || ioam_size < 12)
        fail(Errc::bad_ioam_size,
             "option set of " + std::to_string(ioam_size) +
                 " octets; need a multiple of 4, at least 12");
    InsertionPlan plan;
    plan.ioam_size = ioam_size;
    uint32_t eh_size = 0;
    if (parsed && parsed->eh) {
        eh_size = parsed->eh->size;
        // reusable only when the padding actually ends the EH; oversized
        // pads (> 7, never emitted here) are left alone
        if (parsed->last_pad && parsed->last_pad->size <= 7 &&
            parsed->last_pad->offset + parsed->last_pad->size ==
                parsed->eh->offset + parsed->eh->size)
            plan.tailpad_size = parsed->last_pad->size;
    }
    plan.eh_notail_size = eh_size - plan.tailpad_size;
    plan.new_headpad_size = (4 - (plan.eh_notail_size % 4)) % 4;
    plan.new_tailpad_size =
        (8 - ((plan.eh_notail_size + plan.new_headpad_size + ioam_size) % 8)) % 8;
    plan.extra_room = plan.ioam_size - plan.tailpad_size + plan.new_headpad_size +
                      plan.new_tailpad_size;
    return plan;
}

DeleteStats delete_ioam(RawPacket& pkt, ParsedEh& parsed) {
    DeleteStats st;
    const Block eh = *parsed.eh;
    auto bytes = pkt.bytes();

    if (parsed.decap_size + parsed.pad_size == eh.size - 2) {
        // Only removable options and padding left: splice out the whole
        // EH and relink the preceding next-header chain.
        const uint8_t nh_after = bytes[eh.offset];
        bytes[prev_nh_field(bytes, eh.offset)] = nh_after;
        write_u16(bytes, 4, static_cast<uint16_t>(read_u16(bytes, 4) - eh.size));
        pkt.remove_region(eh.offset, eh.size);
        st.splice_ops = 1;
        st.fast_path = true;
        parsed = ParsedEh{};
        return st;
    }

    // Slide survivor runs left over the removed blocks, one pass.
    std::size_t w = parsed.decaps[0].offset;
    for (uint8_t i = 0; i < parsed.free_idx; ++i) {
        const std::size_t run_start = parsed.decaps[i].offset + parsed.decaps[i].size;
        const std::size_t run_end = i + 1 < parsed.free_idx
                                        ? parsed.decaps[i + 1].offset
                                        : eh.offset + eh.size;
        const std::size_t run = run_end - run_start;
        if (run) {
            std::memmove(bytes.data() + w, bytes.data() + run_start, run);
            ++st.splice_ops;
        }
        w += run;
    }
    const uint32_t content = eh.size - parsed.decap_size;
    const uint32_t new_size = (content + 7u) / 8u * 8u;
    const uint32_t shrink = eh.size - new_size;
    if (new_size > content)
        write_padding(bytes.subspan(eh.offset + content, new_size - content));
    write_u16(bytes, 4, static_cast<uint16_t>(read_u16(bytes, 4) - shrink));
    if (shrink) {
        // dead space sits at the EH tail; the prefix (and the EH itself)
        // keeps its packet offsets
        pkt.remove_region(eh.offset + new_size, shrink);
        ++st.splice_ops;
    }
    bytes = pkt.bytes();
    bytes[eh.offset + 1] = static_cast<uint8_t>(new_size / 8 - 1);

    parsed.eh = Block{eh.offset, new_size};
    parsed.decap_size = 0;
    parsed.free_idx = 0;
    parsed.decap_overflow = false;
    refresh_padding_info(pkt, parsed);
    return st;
}

namespace {

// Writes the inserting node's own entry into slot 0 of a just-spliced
// trace (no role or namespace checks: the node built this buffer).
void write_template_self_data(RawPacket& pkt, std::size_t base,
                              const EncapBuffer& buf, bool unit_relative,
                              const TransitContext& ctx) {
    auto bytes = pkt.bytes();
    for (const TemplateSlot& slot : buf.slots()) {
        const std::size_t opt_off =
            base + slot.offset - (unit_relative ? EncapBuffer::kOptionsOffset : 0);
        switch (slot.kind) {
            case TemplateSlot::Kind::Trace: {
                const uint32_t entry_len = static_cast<uint32_t>(slot.node_len) * 4;
                if (slot.variant == TraceVariant::PreAllocated) {
                    uint16_t packed = read_u16(bytes, opt_off + 4);
                    const uint16_t remaining = packed & 0x7f;
                    if (remaining == 0) {  // template shipped full
                        write_u16(bytes, opt_off + 4,
                                  static_cast<uint16_t>(packed | (1u << 7)));
                        break;
                    }
                    const uint32_t slots =
                        (slot.size - kTraceFixedLen) / entry_len;
                    const uint32_t occupied = slots - remaining;
                    write_node_data(
                        bytes.subspan(opt_off + kTraceFixedLen +
                                          std::size_t{occupied} * entry_len,
                                      entry_len),
                        slot.trace_type, make_node_data(ctx));
                    packed = static_cast<uint16_t>((packed & ~0x7fu) | (remaining - 1));
                    write_u16(bytes, opt_off + 4, packed);
                } else {
                    // incremental images carry exactly one prebuilt slot
                    write_node_data(
                        bytes.subspan(opt_off + slot.size - entry_len, entry_len),
                        slot.trace_type, make_node_data(ctx));
                }
                break;
            }
            case TemplateSlot::Kind::E2E:
                if (slot.e2e_has_seq)
                    write_u64(bytes, opt_off + 6, ctx.packet_seq);
                break;
            case TemplateSlot::Kind::Pot:
                break;
        }
    }
}

}  // namespace

InsertStats insert_ioam(RawPacket& pkt, const RegisteredNode& node,
                        std::string_view out_dev, EhKind kind,
                        const ParsedEh* parsed, const TransitContext& ctx) {
    const EncapBuffer* buf = node.encap_buffer(out_dev, kind);
    if (!buf || buf->empty())
        fail(Errc::no_encap_for_interface,
             "no " + std::string(eh_kind_name(kind)) + " encap configured for " +
                 std::string(out_dev));

    InsertStats st;
    const uint64_t reallocs_before = pkt.realloc_count();
    const bool have_eh = parsed && parsed->eh;

    if (!have_eh) {
        // Splice the entire prebuilt image; hop-by-hop goes first, a
        // destination EH after any hop-by-hop already present.
        const auto img = buf->image();
        std::size_t pos = kIpv6HeaderSize;
        if (kind == EhKind::Destination) {
            const PacketView view = parse_packet(pkt.bytes());
            if (const EhRef* hbh = view.find_eh(EhKind::HopByHop))
                pos = hbh->offset + hbh->size;
        }
        pkt.open_gap(pos, img.size());
        auto bytes = pkt.bytes();
        std::memcpy(bytes.data() + pos, img.data(), img.size());
        const std::size_t field = prev_nh_field(bytes, pos);
        bytes[pos] = bytes[field];
        bytes[field] = protocol_code(kind);
        write_u16(bytes, 4,
                  static_cast<uint16_t>(read_u16(bytes, 4) + img.size()));
        write_template_self_data(pkt, pos, *buf, false, ctx);
        st.inserted_bytes = static_cast<uint32_t>(img.size());
        st.fresh_eh = true;
    } else {
        const auto unit = buf->insert_unit();
        const InsertionPlan plan =
            plan_insertion(parsed, static_cast<uint32_t>(unit.size()));
        const Block eh = *parsed->eh;
        pkt.open_gap(eh.offset + eh.size, plan.extra_room);
        auto bytes = pkt.bytes();
        std::size_t wpos = eh.offset + plan.eh_notail_size;
        if (plan.new_headpad_size) {
            const auto pad = node.padding(plan.new_headpad_size);
            std::memcpy(bytes.data() + wpos, pad.data(), pad.size());
            wpos += pad.size();
        }
        const std::size_t unit_pos = wpos;
        std::memcpy(bytes.data() + wpos, unit.data(), unit.size());
        wpos += unit.size();
        if (plan.new_tailpad_size) {
            const auto pad = node.padding(plan.new_tailpad_size);
            std::memcpy(bytes.data() + wpos, pad.data(), pad.size());
            wpos += pad.size();
        }
        const uint32_t new_size = plan.eh_notail_size + plan.new_headpad_size +
                                  plan.ioam_size + plan.new_tailpad_size;
        if (new_size > 2048)
            fail(Errc::option_too_long, "EH would exceed the ext-len field bound");
        bytes[eh.offset + 1] = static_cast<uint8_t>(new_size / 8 - 1);
        write_u16(bytes, 4,
                  static_cast<uint16_t>(read_u16(bytes, 4) + plan.extra_room));
        write_template_self_data(pkt, unit_pos, *buf, true, ctx);
        st.inserted_bytes = plan.extra_room;
    }

    if (pkt.realloc_count() != reallocs_before) node.count_realloc();
    return st;
}

std::optional<TraceOptionRef> locate_trace(const RawPacket& pkt,
                                           uint32_t eh_offset, uint32_t eh_size,
                                           uint32_t option_offset,
                                           const OptionCodes& codes) {
    const auto bytes = pkt.bytes();
    const uint8_t type = bytes[option_offset];
    const bool prealloc = type == codes.prealloc_trace;
    if (!prealloc && type != codes.incremental_trace) return std::nullopt;

    TraceOptionRef ref;
    ref.offset = option_offset;
    ref.total_len = 2u + bytes[option_offset + 1];
    ref.eh_offset = eh_offset;
    ref.eh_size = eh_size;
    ref.variant = prealloc ? TraceVariant::PreAllocated : TraceVariant::Incremental;
    if (ref.total_len < kTraceFixedLen) return std::nullopt;
    ref.namespace_id = read_u16(bytes, option_offset + 2);
    const uint16_t packed = read_u16(bytes, option_offset + 4);
    ref.node_len = static_cast<uint8_t>(packed >> 11);
    ref.flags = static_cast<uint8_t>((packed >> 7) & 0xf);
    ref.remaining_len = static_cast<uint8_t>(packed & 0x7f);
    ref.trace_type = read_u16(bytes, option_offset + 6);
    if (ref.trace_type & ~kTraceMaskAll) return std::nullopt;
    if (ref.node_len == 0 ||
        ref.node_len != static_cast<uint8_t>(node_data_len(ref.trace_type) / 4))
        return std::nullopt;
    const uint32_t area = ref.total_len - kTraceFixedLen;
    if (area % (static_cast<uint32_t>(ref.node_len) * 4) != 0) return std::nullopt;
    return ref;
}

UpdateResult update_trace(RawPacket& pkt, const TraceOptionRef& ref,
                          const RegisteredNode& node, const TransitContext& ctx) {
    UpdateResult res;
    if (!ctx.in_if || !ctx.in_if->ingress) return res;
    if (!node.namespace_table().find(ref.namespace_id)) return res;

    auto bytes = pkt.bytes();
    const NodeDataEntry entry = make_node_data(ctx);
    const uint32_t entry_len = static_cast<uint32_t>(ref.node_len) * 4;

    if (ref.variant == TraceVariant::PreAllocated) {
        uint16_t packed = read_u16(bytes, ref.offset + 4);
        const uint16_t remaining = packed & 0x7f;
        if (remaining == 0) {
            if (!(packed & (1u << 7))) {
                packed |= 1u << 7;  // overflow flag, data untouched
                write_u16(bytes, ref.offset + 4, packed);
            }
            res.set_overflow = true;
            return res;
        }
        const uint32_t slots = (ref.total_len - kTraceFixedLen) / entry_len;
        const uint32_t occupied = slots - remaining;
        write_node_data(
            bytes.subspan(ref.offset + kTraceFixedLen + occupied * entry_len, entry_len),
            ref.trace_type, entry);
        packed = static_cast<uint16_t>((packed & ~0x7fu) | (remaining - 1));
        write_u16(bytes, ref.offset + 4, packed);
        res.wrote = true;
        return res;
    }

    // Incremental: append one entry in place, stepping the EH size in
    // 8-octet quanta while reusing its tail padding.
    const uint64_t reallocs_before = pkt.realloc_count();
    uint32_t tailpad = 0;
    {
        OptionWalker walker(bytes.subspan(ref.eh_offset, ref.eh_size));
        std::optional<OptionWalker::Item> last;
        while (auto item = walker.next()) last = item;
        if (last && last->is_pad && last->total_len <= 7 &&
            last->offset + last->total_len == ref.eh_size)
            tailpad = last->total_len;
    }
    const uint32_t eh_notail = ref.eh_size - tailpad;
    const int32_t delta = static_cast<int32_t>(entry_len) - static_cast<int32_t>(tailpad);
    const uint32_t growth = static_cast<uint32_t>((delta + 7) / 8 * 8);
    const uint32_t new_tail = growth - entry_len + tailpad;
    const uint32_t new_size = eh_notail + entry_len + new_tail;
    if (new_size > 2048 || ref.total_len - 2 + entry_len > 255) {
        res.set_overflow = true;  // no room left to grow on the wire
        return res;
    }

    if (growth) {
        pkt.open_gap(ref.eh_offset + ref.eh_size, growth);
        bytes = pkt.bytes();
    }
    const uint32_t opt_end = ref.offset + ref.total_len;
    const uint32_t move_len = ref.eh_offset + eh_notail - opt_end;
    if (move_len)
        std::memmove(bytes.data() + opt_end + entry_len, bytes.data() + opt_end,
                     move_len);
    write_node_data(bytes.subspan(opt_end, entry_len), ref.trace_type, entry);
    bytes[ref.offset + 1] = static_cast<uint8_t>(bytes[ref.offset + 1] + entry_len);
    if (new_tail)
        write_padding(bytes.subspan(ref.eh_offset + eh_notail + entry_len, new_tail));
    bytes[ref.eh_offset + 1] = static_cast<uint8_t>(new_size / 8 - 1);
    write_u16(bytes, 4, static_cast<uint16_t>(read_u16(bytes, 4) + growth));
    if (pkt.realloc_count() != reallocs_before) node.count_realloc();
    res.wrote = true;
    res.grew_by = growth;
    return res;
}

namespace {

void emit_records(const RegisteredNode& node, const RawPacket& pkt,
                  const ParsedEh& parsed, uint64_t packet_seq,
                  TelemetrySink* sink, ProcessResult& res) {
    if (!sink) return;
    const auto bytes = pkt.bytes();
    for (const Block& block : parsed.decap_blocks()) {
        const uint8_t type = bytes[block.offset];
        const bool prealloc = type == node.codes().prealloc_trace;
        if (!prealloc && type != node.codes().incremental_trace) continue;
        if (block.size < kTraceFixedLen) continue;
        const uint16_t packed = read_u16(bytes, block.offset + 4);
        const uint8_t node_len = static_cast<uint8_t>(packed >> 11);
        const uint16_t trace_type = read_u16(bytes, block.offset + 6);
        if (node_len == 0 || (trace_type & ~kTraceMaskAll)) continue;
        const uint32_t entry_len = static_cast<uint32_t>(node_len) * 4;
        const uint32_t area = block.size - kTraceFixedLen;
        if (area % entry_len != 0) continue;
        const uint32_t slots = area / entry_len;
        const uint32_t remaining = prealloc ? (packed & 0x7f) : 0;
        if (remaining > slots) continue;
        const uint32_t occupied = slots - remaining;

        TelemetryRecord rec;
        rec.namespace_id = read_u16(bytes, block.offset + 2);
        rec.packet_seq = packet_seq;
        rec.flags = static_cast<uint8_t>((packed >> 7) & 0xf);
        rec.entries.reserve(occupied);
        for (uint32_t i = 0; i < occupied; ++i)
            rec.entries.push_back(read_node_data(
                bytes.subspan(block.offset + kTraceFixedLen + i * entry_len, entry_len),
                trace_type));
        sink->capture(std::move(rec));
        ++res.records_emitted;
    }
}

// Applies this node's trace updates option by option; restarts the walk
// after each update so incremental growth never invalidates offsets.
bool update_pass(const RegisteredNode& node, RawPacket& pkt, ParsedEh& parsed,
                 const TransitContext& ctx, ProcessResult& res) {
    if (!ctx.in_if || !ctx.in_if->ingress) return false;
    bool grew = false;
    uint32_t resume = 2;
    for (;;) {
        const Block eh = *parsed.eh;
        std::optional<TraceOptionRef> target;
        {
            OptionWalker walker(pkt.bytes().subspan(eh.offset, eh.size));
            while (auto item = walker.next()) {
                if (item->offset < resume || item->is_pad) continue;
                if (auto ref = locate_trace(pkt, eh.offset, eh.size,
                                            eh.offset + item->offset, node.codes())) {
                    target = ref;
                    break;
                }
            }
        }
        if (!target) break;
        const UpdateResult upd = update_trace(pkt, *target, node, ctx);
        res.updated |= upd.wrote;
        grew |= upd.grew_by > 0;
        // later options shift by the option growth, not the EH growth
        // (those differ when tail padding is reused)
        const uint32_t option_growth =
            upd.wrote && target->variant == TraceVariant::Incremental
                ? static_cast<uint32_t>(target->node_len) * 4
                : 0;
        resume = target->offset - eh.offset + target->total_len + option_growth;
        if (upd.grew_by) parsed.eh->size += upd.grew_by;
        grew |= option_growth > 0;
    }
    return grew;
}

}  // namespace

ProcessResult process_packet(const RegisteredNode& node, std::string_view in_dev,
                             std::string_view out_dev, RawPacket& pkt,
                             const WallClock& clock, uint64_t packet_seq,
                             TelemetrySink* sink, bool allow_encap) {
    ProcessResult res;
    TransitContext ctx;
    ctx.node_id = node.node_id();
    ctx.in_if = in_dev.empty() ? nullptr : node.find_interface(in_dev);
    ctx.out_if = out_dev.empty() ? nullptr : node.find_interface(out_dev);
    ctx.wall_clock = clock;
    ctx.packet_seq = packet_seq;
    if (pkt.size() > 7) ctx.hop_limit_at_arrival = pkt.bytes()[7];

    for (const EhKind kind : {EhKind::HopByHop, EhKind::Destination}) {
        const bool examine =
            kind == EhKind::HopByHop ||
            (node.address() && pkt.size() >= kIpv6HeaderSize &&
             std::equal(node.address()->begin(), node.address()->end(),
                        pkt.bytes().begin() + 24));
        ParsedEh parsed;
        try {
            parsed = scan_eh(pkt, kind, node);
        } catch (const Error&) {
            res.dropped = true;
            return res;
        }
        ContextGuard guard(pkt, parsed);
        if (parsed.eh && examine) {
            res.decap_overflow |= parsed.decap_overflow;
            if (update_pass(node, pkt, parsed, ctx, res))
                parsed = scan_eh(pkt, kind, node);  // growth moved the blocks
            if (parsed.free_idx > 0) {
                emit_records(node, pkt, parsed, packet_seq, sink, res);
                const DeleteStats del = delete_ioam(pkt, parsed);
                res.removed = true;
                res.splice_ops += del.splice_ops;
            }
        }
        if (allow_encap && ctx.out_if) {
            const EncapBuffer* buf = node.encap_buffer(out_dev, kind);
            if (buf && !buf->empty()) {
                const InsertStats ins =
                    insert_ioam(pkt, node, out_dev, kind, &parsed, ctx);
                res.inserted = true;
                res.inserted_bytes += ins.inserted_bytes;
            }
        }
    }
    return res;
}

}  // namespace ioam
