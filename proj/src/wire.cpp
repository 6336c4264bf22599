#include "ioam/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ioam/bytes.hpp"

namespace ioam {

namespace {

constexpr std::size_t kReallocSlack = 128;

// trace option fixed part: type + len octets, then the 8-octet trace header
constexpr uint32_t kTraceFixedLen = 10;
constexpr uint32_t kTraceHeaderLen = 8;

}  // namespace

const char* errc_name(Errc code) {
    switch (code) {
        case Errc::too_short: return "too_short";
        case Errc::not_ipv6: return "not_ipv6";
        case Errc::length_mismatch: return "length_mismatch";
        case Errc::truncated_eh: return "truncated_eh";
        case Errc::eh_chain_too_long: return "eh_chain_too_long";
        case Errc::option_overrun: return "option_overrun";
        case Errc::malformed_option: return "malformed_option";
        case Errc::malformed_eh: return "malformed_eh";
        case Errc::inconsistent_node_len: return "inconsistent_node_len";
        case Errc::unsupported_trace_bit: return "unsupported_trace_bit";
        case Errc::option_too_long: return "option_too_long";
        case Errc::bad_pad_len: return "bad_pad_len";
        case Errc::alignment_violation: return "alignment_violation";
        case Errc::parse_error: return "parse_error";
        case Errc::too_many_namespaces: return "too_many_namespaces";
        case Errc::too_many_interfaces: return "too_many_interfaces";
        case Errc::duplicate_interface: return "duplicate_interface";
        case Errc::duplicate_namespace: return "duplicate_namespace";
        case Errc::encap_not_egress_role: return "encap_not_egress_role";
        case Errc::encap_unknown_interface: return "encap_unknown_interface";
        case Errc::option_kind_mismatch: return "option_kind_mismatch";
        case Errc::no_encap_for_interface: return "no_encap_for_interface";
        case Errc::bad_ioam_size: return "bad_ioam_size";
        case Errc::context_already_attached: return "context_already_attached";
        case Errc::mtu_exceeded: return "mtu_exceeded";
        case Errc::bad_topology: return "bad_topology";
        case Errc::no_path: return "no_path";
        case Errc::bad_params: return "bad_params";
        case Errc::io_error: return "io_error";
    }
    return "unknown";
}

Error::Error(Errc code, const std::string& what, std::size_t offset)
    : std::runtime_error(what), code_(code), offset_(offset) {}

void fail(Errc code, const std::string& what, std::size_t offset) {
    std::string msg = std::string(errc_name(code)) + ": " + what;
    if (offset != Error::npos)
        msg += " (octet " + std::to_string(offset) + ")";
    throw Error(code, msg, offset);
}

uint8_t protocol_code(EhKind kind) {
    return kind == EhKind::HopByHop ? kProtoHopByHop : kProtoDestination;
}

std::optional<EhKind> eh_kind_from_protocol(uint8_t proto) {
    if (proto == kProtoHopByHop) return EhKind::HopByHop;
    if (proto == kProtoDestination) return EhKind::Destination;
    return std::nullopt;
}

const char* eh_kind_name(EhKind kind) {
    return kind == EhKind::HopByHop ? "hop_by_hop" : "destination";
}

const char* option_kind_name(EhOptionKind kind) {
    switch (kind) {
        case EhOptionKind::Pad1: return "pad1";
        case EhOptionKind::PadN: return "padn";
        case EhOptionKind::IoamTrace: return "ioam_trace";
        case EhOptionKind::IoamPot: return "ioam_pot";
        case EhOptionKind::IoamE2E: return "ioam_e2e";
        case EhOptionKind::Unknown: return "unknown";
    }
    return "unknown";
}

Ipv6Addr make_addr(uint16_t prefix_word, uint16_t host) {
    Ipv6Addr a{};
    a[0] = static_cast<uint8_t>(prefix_word >> 8);
    a[1] = static_cast<uint8_t>(prefix_word);
    a[14] = static_cast<uint8_t>(host >> 8);
    a[15] = static_cast<uint8_t>(host);
    return a;
}

Ipv6Addr parse_addr(std::string_view text) {
    const auto parse_groups = [](std::string_view part) {
        std::vector<uint16_t> groups;
        if (part.empty()) return groups;
        std::size_t start = 0;
        while (start <= part.size()) {
            const std::size_t colon = part.find(':', start);
            const std::string_view g =
                part.substr(start, colon == std::string_view::npos
                                       ? std::string_view::npos
                                       : colon - start);
            if (g.empty() || g.size() > 4)
                fail(Errc::parse_error, "bad ipv6 group in address");
            uint16_t v = 0;
            for (char c : g) {
                const int d = (c >= '0' && c <= '9')   ? c - '0'
                              : (c >= 'a' && c <= 'f') ? c - 'a' + 10
                              : (c >= 'A' && c <= 'F') ? c - 'A' + 10
                                                       : -1;
                if (d < 0) fail(Errc::parse_error, "bad ipv6 digit in address");
                v = static_cast<uint16_t>((v << 4) | d);
            }
            groups.push_back(v);
            if (colon == std::string_view::npos) break;
            start = colon + 1;
        }
        return groups;
    };

    std::vector<uint16_t> head, tail;
    const std::size_t gap = text.find("::");
    if (gap == std::string_view::npos) {
        head = parse_groups(text);
        if (head.size() != 8) fail(Errc::parse_error, "ipv6 address needs 8 groups");
    } else {
        head = parse_groups(text.substr(0, gap));
        tail = parse_groups(text.substr(gap + 2));
        if (head.size() + tail.size() > 7)
            fail(Errc::parse_error, "ipv6 address over-specified around ::");
    }
    Ipv6Addr addr{};
    for (std::size_t i = 0; i < head.size(); ++i) {
        addr[2 * i] = static_cast<uint8_t>(head[i] >> 8);
        addr[2 * i + 1] = static_cast<uint8_t>(head[i]);
    }
    for (std::size_t i = 0; i < tail.size(); ++i) {
        const std::size_t g = 8 - tail.size() + i;
        addr[2 * g] = static_cast<uint8_t>(tail[i] >> 8);
        addr[2 * g + 1] = static_cast<uint8_t>(tail[i]);
    }
    return addr;
}

std::string addr_to_string(const Ipv6Addr& addr) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    for (std::size_t i = 0; i < 16; i += 2) {
        if (i) out += ':';
        uint16_t w = static_cast<uint16_t>((addr[i] << 8) | addr[i + 1]);
        out += digits[(w >> 12) & 0xf];
        out += digits[(w >> 8) & 0xf];
        out += digits[(w >> 4) & 0xf];
        out += digits[w & 0xf];
    }
    return out;
}

// ---------------------------------------------------------------------------
// RawPacket

RawPacket::RawPacket(std::span<const uint8_t> bytes, std::size_t headroom) {
    store_.resize(headroom + bytes.size());
    front_ = headroom;
    len_ = bytes.size();
    std::memcpy(store_.data() + front_, bytes.data(), bytes.size());
}

RawPacket RawPacket::clone() const {
    RawPacket copy(bytes(), front_);
    return copy;
}

void RawPacket::open_gap(std::size_t at, std::size_t n) {
    if (n == 0) return;
    if (front_ >= n) {
        std::memmove(store_.data() + front_ - n, store_.data() + front_, at);
        front_ -= n;
        len_ += n;
        return;
    }
    std::vector<uint8_t> grown(kReallocSlack + len_ + n);
    std::memcpy(grown.data() + kReallocSlack, store_.data() + front_, at);
    std::memcpy(grown.data() + kReallocSlack + at + n,
                store_.data() + front_ + at, len_ - at);
    store_ = std::move(grown);
    front_ = kReallocSlack;
    len_ += n;
    ++reallocs_;
}

void RawPacket::remove_region(std::size_t at, std::size_t n) {
    if (n == 0) return;
    std::memmove(store_.data() + front_ + n, store_.data() + front_, at);
    front_ += n;
    len_ -= n;
}

// ---------------------------------------------------------------------------
// packet parsing

PacketView parse_packet(std::span<const uint8_t> bytes) {
    if (bytes.size() < kIpv6HeaderSize)
        fail(Errc::too_short, "need at least 40 octets, have " +
                                  std::to_string(bytes.size()));
    if ((bytes[0] >> 4) != 6)
        fail(Errc::not_ipv6, "version nibble is " + std::to_string(bytes[0] >> 4), 0);

    PacketView view;
    view.hdr.version_tc_flow = read_u32(bytes, 0);
    view.hdr.payload_length = read_u16(bytes, 4);
    view.hdr.next_header = bytes[6];
    view.hdr.hop_limit = bytes[7];
    std::memcpy(view.hdr.src.data(), bytes.data() + 8, 16);
    std::memcpy(view.hdr.dst.data(), bytes.data() + 24, 16);

    const std::size_t end = kIpv6HeaderSize + view.hdr.payload_length;
    if (bytes.size() < end)
        fail(Errc::too_short, "payload length field declares " +
                                  std::to_string(view.hdr.payload_length) +
                                  " octets past the header");
    if (bytes.size() > end)
        fail(Errc::length_mismatch, "buffer exceeds declared packet size", end);

    uint8_t nh = view.hdr.next_header;
    std::size_t off = kIpv6HeaderSize;
    while (auto kind = eh_kind_from_protocol(nh)) {
        if (off + 2 > end)
            fail(Errc::truncated_eh, "extension header start past packet end", off);
        const std::size_t sz = (static_cast<std::size_t>(bytes[off + 1]) + 1) * 8;
        if (off + sz > end)
            fail(Errc::truncated_eh, "extension header of " + std::to_string(sz) +
                                         " octets crosses packet end", off);
        if (view.eh_count == view.eh_chain.size())
            fail(Errc::eh_chain_too_long, "more chained extension headers than supported", off);
        view.eh_chain[view.eh_count++] =
            EhRef{*kind, static_cast<uint32_t>(off), static_cast<uint32_t>(sz)};
        nh = bytes[off];
        off += sz;
    }
    view.payload_offset = static_cast<uint32_t>(off);
    view.payload_size = static_cast<uint32_t>(end - off);
    view.payload_protocol = nh;
    return view;
}

// ---------------------------------------------------------------------------
// option walking and decoding

std::optional<OptionWalker::Item> OptionWalker::next() {
    if (pos_ >= eh_.size()) return std::nullopt;
    Item item;
    item.type = eh_[pos_];
    item.offset = static_cast<uint32_t>(pos_);
    if (item.type == 0) {  // Pad1
        item.total_len = 1;
        item.is_pad = true;
        pos_ += 1;
        return item;
    }
    if (pos_ + 2 > eh_.size())
        fail(Errc::option_overrun, "option header crosses EH end", pos_);
    const uint32_t dlen = eh_[pos_ + 1];
    item.total_len = 2 + dlen;
    if (pos_ + item.total_len > eh_.size())
        fail(Errc::option_overrun, "option data of " + std::to_string(dlen) +
                                       " octets crosses EH end", pos_);
    item.is_pad = item.type == 1;  // PadN
    item.data = eh_.subspan(pos_ + 2, dlen);
    pos_ += item.total_len;
    return item;
}

uint32_t node_data_len(uint16_t trace_type) {
    if (trace_type & ~kTraceMaskAll)
        fail(Errc::unsupported_trace_bit,
             "trace-type mask 0x" + to_hex({reinterpret_cast<const uint8_t*>(&trace_type), 2}) +
                 " sets undefined bits");
    return 4u * static_cast<uint32_t>(std::popcount(trace_type));
}

void write_node_data(std::span<uint8_t> out, uint16_t trace_type,
                     const NodeDataEntry& entry) {
    std::size_t off = 0;
    if (trace_type & kTraceHopNode) {
        write_u32(out, off, (static_cast<uint32_t>(entry.hop_limit) << 24) |
                                (entry.node_id & 0xffffffu));
        off += 4;
    }
    if (trace_type & kTraceIfIds) {
        write_u16(out, off, entry.ingress_if_id);
        write_u16(out, off + 2, entry.egress_if_id);
        off += 4;
    }
    if (trace_type & kTraceTsSec) {
        write_u32(out, off, entry.timestamp_sec);
        off += 4;
    }
    if (trace_type & kTraceTsSubsec) {
        write_u32(out, off, entry.timestamp_subsec);
        off += 4;
    }
    if (trace_type & kTraceNsData) {
        write_u32(out, off, entry.namespace_specific);
        off += 4;
    }
}

NodeDataEntry read_node_data(std::span<const uint8_t> in, uint16_t trace_type) {
    NodeDataEntry e;
    std::size_t off = 0;
    if (trace_type & kTraceHopNode) {
        const uint32_t w = read_u32(in, off);
        e.hop_limit = static_cast<uint8_t>(w >> 24);
        e.node_id = w & 0xffffffu;
        off += 4;
    }
    if (trace_type & kTraceIfIds) {
        e.ingress_if_id = read_u16(in, off);
        e.egress_if_id = read_u16(in, off + 2);
        off += 4;
    }
    if (trace_type & kTraceTsSec) {
        e.timestamp_sec = read_u32(in, off);
        off += 4;
    }
    if (trace_type & kTraceTsSubsec) {
        e.timestamp_subsec = read_u32(in, off);
        off += 4;
    }
    if (trace_type & kTraceNsData) {
        e.namespace_specific = read_u32(in, off);
        off += 4;
    }
    return e;
}

namespace {

IoamTraceOption decode_trace_body(std::span<const uint8_t> data,
                                  TraceVariant variant, std::size_t at) {
    if (data.size() < kTraceHeaderLen)
        fail(Errc::malformed_option, "trace option data shorter than its header", at);
    IoamTraceOption opt;
    opt.variant = variant;
    opt.namespace_id = read_u16(data, 0);
    const uint16_t packed = read_u16(data, 2);
    opt.node_len = static_cast<uint8_t>(packed >> 11);
    opt.flags = static_cast<uint8_t>((packed >> 7) & 0xf);
    opt.remaining_len = static_cast<uint8_t>(packed & 0x7f);
    opt.trace_type = read_u16(data, 4);
    if (opt.trace_type & ~kTraceMaskAll)
        fail(Errc::malformed_option, "trace-type mask sets undefined bits", at);
    if (opt.trace_type == 0)
        fail(Errc::malformed_option, "empty trace-type mask", at);
    if (opt.node_len != node_data_len(opt.trace_type) / 4)
        fail(Errc::malformed_option, "node_len disagrees with trace-type mask", at);

    const std::size_t area = data.size() - kTraceHeaderLen;
    const std::size_t entry_len = static_cast<std::size_t>(opt.node_len) * 4;
    if (area % entry_len != 0)
        fail(Errc::malformed_option, "node-data area is not slot-aligned", at);
    const std::size_t slots = area / entry_len;
    std::size_t occupied;
    if (variant == TraceVariant::PreAllocated) {
        if (opt.remaining_len > slots)
            fail(Errc::malformed_option, "remaining_len exceeds slot count", at);
        occupied = slots - opt.remaining_len;
    } else {
        occupied = slots;  // incremental carries only written entries
    }
    opt.node_data.reserve(occupied);
    for (std::size_t i = 0; i < occupied; ++i)
        opt.node_data.push_back(
            read_node_data(data.subspan(kTraceHeaderLen + i * entry_len, entry_len),
                           opt.trace_type));
    return opt;
}

IoamE2EOption decode_e2e_body(std::span<const uint8_t> data, std::size_t at) {
    if (data.size() < 4)
        fail(Errc::malformed_option, "e2e option data shorter than 4 octets", at);
    IoamE2EOption opt;
    opt.namespace_id = read_u16(data, 0);
    opt.e2e_type = read_u16(data, 2);
    if (opt.e2e_type & kE2eSeqNum) {
        if (data.size() < 12)
            fail(Errc::malformed_option, "e2e option misses its sequence number", at);
        opt.seq_num = read_u64(data, 4);
    }
    return opt;
}

IoamPotOption decode_pot_body(std::span<const uint8_t> data, std::size_t at) {
    if (data.size() < 2)
        fail(Errc::malformed_option, "pot option data shorter than 2 octets", at);
    IoamPotOption opt;
    opt.namespace_id = read_u16(data, 0);
    opt.opaque_body.assign(data.begin() + 2, data.end());
    return opt;
}

}  // namespace

std::vector<EhOption> parse_options(std::span<const uint8_t> eh_bytes,
                                    const OptionCodes& codes) {
    if (eh_bytes.size() < 8)
        fail(Errc::malformed_eh, "extension header shorter than 8 octets");
    const std::size_t declared = (static_cast<std::size_t>(eh_bytes[1]) + 1) * 8;
    if (declared != eh_bytes.size())
        fail(Errc::malformed_eh, "ext-len field declares " + std::to_string(declared) +
                                     " octets for a " + std::to_string(eh_bytes.size()) +
                                     "-octet EH");

    std::vector<EhOption> out;
    OptionWalker walker(eh_bytes);
    while (auto item = walker.next()) {
        EhOption opt;
        opt.type = item->type;
        opt.offset = item->offset;
        opt.total_len = item->total_len;
        opt.body.assign(item->data.begin(), item->data.end());
        if (item->type == 0) {
            opt.kind = EhOptionKind::Pad1;
        } else if (item->type == 1) {
            opt.kind = EhOptionKind::PadN;
        } else if (item->type == codes.prealloc_trace) {
            opt.kind = EhOptionKind::IoamTrace;
            opt.trace = decode_trace_body(item->data, TraceVariant::PreAllocated,
                                          item->offset);
        } else if (item->type == codes.incremental_trace) {
            opt.kind = EhOptionKind::IoamTrace;
            opt.trace = decode_trace_body(item->data, TraceVariant::Incremental,
                                          item->offset);
        } else if (item->type == codes.e2e) {
            opt.kind = EhOptionKind::IoamE2E;
            opt.e2e = decode_e2e_body(item->data, item->offset);
        } else if (item->type == codes.pot) {
            opt.kind = EhOptionKind::IoamPot;
            opt.pot = decode_pot_body(item->data, item->offset);
        } else {
            opt.kind = EhOptionKind::Unknown;
        }
        out.push_back(std::move(opt));
    }
    return out;
}

// ---------------------------------------------------------------------------
// option encoding

std::vector<uint8_t> encode_trace_option(const IoamTraceOption& opt,
                                         const OptionCodes& codes) {
    const uint32_t entry_len = node_data_len(opt.trace_type);
    if (entry_len == 0)
        fail(Errc::unsupported_trace_bit, "trace-type mask selects no fields");
    if (opt.node_len != entry_len / 4)
        fail(Errc::inconsistent_node_len,
             "node_len " + std::to_string(opt.node_len) + " but trace-type implies " +
                 std::to_string(entry_len / 4));
    if (opt.variant == TraceVariant::Incremental && opt.remaining_len != 0)
        fail(Errc::malformed_option, "incremental traces carry no free slots");

    const std::size_t area = opt.capacity() * entry_len;
    if (kTraceHeaderLen + area > 255)
        fail(Errc::option_too_long, "node-data area of " + std::to_string(area) +
                                        " octets exceeds the option length field");

    std::vector<uint8_t> out(kTraceFixedLen + area, 0);
    out[0] = opt.variant == TraceVariant::PreAllocated ? codes.prealloc_trace
                                                       : codes.incremental_trace;
    out[1] = static_cast<uint8_t>(kTraceHeaderLen + area);
    write_u16(out, 2, opt.namespace_id);
    write_u16(out, 4, static_cast<uint16_t>((opt.node_len << 11) |
                                            ((opt.flags & 0xf) << 7) |
                                            (opt.remaining_len & 0x7f)));
    write_u16(out, 6, opt.trace_type);
    // octets 8..9 reserved, zero
    for (std::size_t i = 0; i < opt.node_data.size(); ++i)
        write_node_data(std::span<uint8_t>(out).subspan(kTraceFixedLen + i * entry_len,
                                                        entry_len),
                        opt.trace_type, opt.node_data[i]);
    return out;
}

std::vector<uint8_t> encode_e2e_option(const IoamE2EOption& opt,
                                       const OptionCodes& codes) {
    const bool with_seq = (opt.e2e_type & kE2eSeqNum) != 0;
    std::vector<uint8_t> out(2 + (with_seq ? 12 : 4), 0);
    out[0] = codes.e2e;
    out[1] = static_cast<uint8_t>(out.size() - 2);
    write_u16(out, 2, opt.namespace_id);
    write_u16(out, 4, opt.e2e_type);
    if (with_seq) write_u64(out, 6, opt.seq_num);
    return out;
}

std::vector<uint8_t> encode_pot_option(const IoamPotOption& opt,
                                       const OptionCodes& codes) {
    if (2 + opt.opaque_body.size() > 255)
        fail(Errc::option_too_long, "pot body exceeds the option length field");
    std::vector<uint8_t> out(4 + opt.opaque_body.size(), 0);
    out[0] = codes.pot;
    out[1] = static_cast<uint8_t>(2 + opt.opaque_body.size());
    write_u16(out, 2, opt.namespace_id);
    std::copy(opt.opaque_body.begin(), opt.opaque_body.end(), out.begin() + 4);
    return out;
}

uint32_t head_padding(uint32_t current_offset, uint32_t align_x, uint32_t align_y) {
    if ((align_x != 1 && align_x != 2 && align_x != 4 && align_x != 8) ||
        align_y >= align_x)
        fail(Errc::bad_params, "alignment must be xn+y with x in {1,2,4,8}, y < x");
    return (align_y + align_x - (current_offset % align_x)) % align_x;
}

std::vector<uint8_t> encode_padding(uint32_t len) {
    if (len < 1 || len > 7)
        fail(Errc::bad_pad_len, "padding length " + std::to_string(len) +
                                    " outside 1..7");
    std::vector<uint8_t> out(len, 0);
    write_padding(out);
    return out;
}

void write_padding(std::span<uint8_t> out) {
    if (out.empty()) return;
    if (out.size() == 1) {
        out[0] = 0;  // Pad1
        return;
    }
    out[0] = 1;  // PadN
    out[1] = static_cast<uint8_t>(out.size() - 2);
    std::fill(out.begin() + 2, out.end(), 0);
}

// ---------------------------------------------------------------------------
// structural codec

std::vector<uint8_t> encode_option(const EhOption& opt) {
    if (opt.kind == EhOptionKind::Pad1) return {0};
    std::vector<uint8_t> out;
    out.reserve(2 + opt.body.size());
    out.push_back(opt.type);
    out.push_back(static_cast<uint8_t>(opt.body.size()));
    out.insert(out.end(), opt.body.begin(), opt.body.end());
    return out;
}

std::vector<uint8_t> encode_eh(uint8_t next_header,
                               const std::vector<EhOption>& options,
                               const OptionCodes& codes) {
    std::vector<uint8_t> out{next_header, 0};
    for (const EhOption& opt : options) {
        if (codes.is_ioam(opt.type) && out.size() % 4 != 0)
            fail(Errc::alignment_violation,
                 "ioam option type octet at offset " + std::to_string(out.size()) +
                     " is not 4n-aligned");
        const auto enc = encode_option(opt);
        out.insert(out.end(), enc.begin(), enc.end());
    }
    if (out.size() % 8 != 0 || out.size() < 8)
        fail(Errc::malformed_eh, "options sum to " + std::to_string(out.size()) +
                                     " octets, not a multiple of 8");
    out[1] = static_cast<uint8_t>(out.size() / 8 - 1);
    return out;
}

DecodedPacket decode_packet(std::span<const uint8_t> bytes,
                            const OptionCodes& codes) {
    const PacketView view = parse_packet(bytes);
    DecodedPacket pkt;
    pkt.version_tc_flow = view.hdr.version_tc_flow;
    pkt.hop_limit = view.hdr.hop_limit;
    pkt.src = view.hdr.src;
    pkt.dst = view.hdr.dst;
    pkt.payload_protocol = view.payload_protocol;
    for (uint32_t i = 0; i < view.eh_count; ++i) {
        const EhRef& ref = view.eh_chain[i];
        DecodedEh eh;
        eh.kind = ref.kind;
        eh.options = parse_options(bytes.subspan(ref.offset, ref.size), codes);
        pkt.ehs.push_back(std::move(eh));
    }
    pkt.payload.assign(bytes.begin() + view.payload_offset,
                       bytes.begin() + view.payload_offset + view.payload_size);
    return pkt;
}

std::vector<uint8_t> encode_packet(const DecodedPacket& pkt,
                                   const OptionCodes& codes) {
    std::vector<std::vector<uint8_t>> ehs;
    for (std::size_t i = 0; i < pkt.ehs.size(); ++i) {
        const uint8_t nh = i + 1 < pkt.ehs.size()
                               ? protocol_code(pkt.ehs[i + 1].kind)
                               : pkt.payload_protocol;
        ehs.push_back(encode_eh(nh, pkt.ehs[i].options, codes));
    }
    std::size_t total = kIpv6HeaderSize + pkt.payload.size();
    for (const auto& eh : ehs) total += eh.size();
    if (total - kIpv6HeaderSize > 0xffff)
        fail(Errc::length_mismatch, "packet exceeds the 16-bit payload length");

    std::vector<uint8_t> out(total, 0);
    write_u32(out, 0, pkt.version_tc_flow);
    write_u16(out, 4, static_cast<uint16_t>(total - kIpv6HeaderSize));
    out[6] = pkt.ehs.empty() ? pkt.payload_protocol : protocol_code(pkt.ehs[0].kind);
    out[7] = pkt.hop_limit;
    std::memcpy(out.data() + 8, pkt.src.data(), 16);
    std::memcpy(out.data() + 24, pkt.dst.data(), 16);
    std::size_t off = kIpv6HeaderSize;
    for (const auto& eh : ehs) {
        std::memcpy(out.data() + off, eh.data(), eh.size());
        off += eh.size();
    }
    std::memcpy(out.data() + off, pkt.payload.data(), pkt.payload.size());
    return out;
}

// ---------------------------------------------------------------------------
// hex fixtures

std::string to_hex(std::span<const uint8_t> bytes) {
    static const char* digits = "0123456789abcdef";
    std::string out;
    out.reserve(bytes.size() * 2);
    for (uint8_t b : bytes) {
        out += digits[b >> 4];
        out += digits[b & 0xf];
    }
    return out;
}

namespace {

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

}  // namespace

std::vector<uint8_t> from_hex(std::string_view text) {
    if (text.size() % 2 != 0)
        fail(Errc::parse_error, "hex string has odd length", text.size());
    std::vector<uint8_t> out(text.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) {
        const int hi = hex_value(text[2 * i]);
        const int lo = hex_value(text[2 * i + 1]);
        if (hi < 0 || lo < 0)
            fail(Errc::parse_error, "invalid hex digit", i);
        out[i] = static_cast<uint8_t>((hi << 4) | lo);
    }
    return out;
}

std::vector<std::vector<uint8_t>> read_hex_fixture(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open " + path);
    std::vector<std::vector<uint8_t>> out;
    std::string line;
    while (std::getline(in, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == ' '))
            line.pop_back();
        if (line.empty()) continue;
        out.push_back(from_hex(line));
    }
    return out;
}

void write_hex_fixture(const std::string& path,
                       const std::vector<std::vector<uint8_t>>& packets) {
    std::ofstream out(path);
    if (!out) fail(Errc::io_error, "cannot open " + path);
    for (const auto& pkt : packets) out << to_hex(pkt) << '\n';
}

}  // namespace ioam
