#include "ioam/pcap.hpp"

#include <cstring>

#include "ioam/errors.hpp"

namespace ioam {

namespace {

void put_u32le(std::ofstream& out, uint32_t v) {
    const uint8_t b[4] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8),
                          static_cast<uint8_t>(v >> 16), static_cast<uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u16le(std::ofstream& out, uint16_t v) {
    const uint8_t b[2] = {static_cast<uint8_t>(v), static_cast<uint8_t>(v >> 8)};
    out.write(reinterpret_cast<const char*>(b), 2);
}

uint32_t get_u32(std::ifstream& in, bool swapped) {
    uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    uint32_t v = static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
                 (static_cast<uint32_t>(b[2]) << 16) |
                 (static_cast<uint32_t>(b[3]) << 24);
    if (swapped) v = __builtin_bswap32(v);
    return v;
}

}  // namespace

PcapWriter::PcapWriter(const std::string& path, uint32_t link_type)
    : out_(path, std::ios::binary) {
    if (!out_) fail(Errc::io_error, "cannot open " + path + " for writing");
    put_u32le(out_, kPcapMagic);
    put_u16le(out_, 2);  // version 2.4
    put_u16le(out_, 4);
    put_u32le(out_, 0);  // thiszone
    put_u32le(out_, 0);  // sigfigs
    put_u32le(out_, 65535);
    put_u32le(out_, link_type);
}

void PcapWriter::write(std::span<const uint8_t> packet, uint32_t ts_sec,
                       uint32_t ts_usec) {
    put_u32le(out_, ts_sec);
    put_u32le(out_, ts_usec);
    put_u32le(out_, static_cast<uint32_t>(packet.size()));
    put_u32le(out_, static_cast<uint32_t>(packet.size()));
    out_.write(reinterpret_cast<const char*>(packet.data()),
               static_cast<std::streamsize>(packet.size()));
}

PcapReader::PcapReader(const std::string& path) : in_(path, std::ios::binary) {
    if (!in_) fail(Errc::io_error, "cannot open " + path);
    const uint32_t magic = get_u32(in_, false);
    if (magic == kPcapMagic) {
        swapped_ = false;
    } else if (magic == 0xd4c3b2a1) {
        swapped_ = true;
    } else {
        fail(Errc::parse_error, path + " is not a pcap file", 0);
    }
    char skip[16];
    in_.read(skip, 4);  // version
    in_.read(skip, 8);  // thiszone + sigfigs
    get_u32(in_, swapped_);  // snaplen
    link_type_ = get_u32(in_, swapped_);
    if (!in_) fail(Errc::parse_error, "truncated pcap global header", 0);
}

std::optional<PcapReader::Record> PcapReader::next() {
    uint8_t first[4];
    in_.read(reinterpret_cast<char*>(first), 4);
    if (in_.gcount() < 4) return std::nullopt;  // clean end of file
    Record rec;
    rec.ts_sec = static_cast<uint32_t>(first[0]) |
                 (static_cast<uint32_t>(first[1]) << 8) |
                 (static_cast<uint32_t>(first[2]) << 16) |
                 (static_cast<uint32_t>(first[3]) << 24);
    if (swapped_) rec.ts_sec = __builtin_bswap32(rec.ts_sec);
    rec.ts_usec = get_u32(in_, swapped_);
    const uint32_t cap_len = get_u32(in_, swapped_);
    get_u32(in_, swapped_);  // original length
    if (!in_) return std::nullopt;
    rec.bytes.resize(cap_len);
    in_.read(reinterpret_cast<char*>(rec.bytes.data()), cap_len);
    if (!in_) fail(Errc::parse_error, "truncated pcap record");
    return rec;
}

}  // namespace ioam
