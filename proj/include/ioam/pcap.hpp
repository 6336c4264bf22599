#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace ioam {

// Classic pcap container, little-endian, link type 101 (raw IP).
inline constexpr uint32_t kPcapMagic = 0xa1b2c3d4;
inline constexpr uint32_t kPcapLinkTypeRawIp = 101;

class PcapWriter {
public:
    explicit PcapWriter(const std::string& path,
                        uint32_t link_type = kPcapLinkTypeRawIp);

    void write(std::span<const uint8_t> packet, uint32_t ts_sec = 0,
               uint32_t ts_usec = 0);

private:
    std::ofstream out_;
};

class PcapReader {
public:
    explicit PcapReader(const std::string& path);

    struct Record {
        uint32_t ts_sec = 0;
        uint32_t ts_usec = 0;
        std::vector<uint8_t> bytes;
    };

    std::optional<Record> next();
    uint32_t link_type() const { return link_type_; }

private:
    std::ifstream in_;
    bool swapped_ = false;
    uint32_t link_type_ = 0;
};

}  // namespace ioam
