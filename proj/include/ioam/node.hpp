#pragma once

#include <array>
#include <atomic>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ioam/wire.hpp"

namespace ioam {

struct InterfaceConfig {
    std::string dev_name;
    uint16_t ioam_if_id = 0;
    bool ingress = false;  // both false == boundary that rejects incoming traffic
    bool egress = false;
};

struct NamespaceConfig {
    uint16_t namespace_id = 0;
    bool remove_on_transit = false;
};

using OptionTemplate = std::variant<IoamTraceOption, IoamE2EOption, IoamPotOption>;

struct EncapEntry {
    uint16_t namespace_id = 0;
    std::string egress_dev;
    EhKind eh_kind = EhKind::HopByHop;
    OptionTemplate option_template;
};

struct NodeConfig {
    uint32_t ioam_node_id = 0;
    std::vector<InterfaceConfig> interfaces;
    std::vector<NamespaceConfig> namespaces;
    std::vector<EncapEntry> encaps;
    std::optional<Ipv6Addr> address;  // enables Destination-EH processing
    OptionCodes codes{};
};

// Fixed-bucket chained table; bucket count is four times the namespace
// bound.
class NamespaceTable {
public:
    void insert(const NamespaceConfig& ns);
    const NamespaceConfig* find(uint16_t namespace_id) const;

    static std::size_t bucket_of(uint16_t namespace_id) {
        return namespace_id % kNsBucketCount;
    }
    std::size_t bucket_count() const { return buckets_.size(); }
    std::size_t bucket_size(std::size_t i) const { return buckets_[i].size(); }

private:
    std::array<std::vector<NamespaceConfig>, kNsBucketCount> buckets_;
};

// Geometry of one option template inside a prebuilt encap image; offsets
// are relative to the image start.
struct TemplateSlot {
    enum class Kind : uint8_t { Trace, E2E, Pot };

    Kind kind = Kind::Trace;
    uint32_t offset = 0;
    uint32_t size = 0;
    uint16_t namespace_id = 0;
    // trace geometry, used for the encap node's own slot-0 write
    TraceVariant variant = TraceVariant::PreAllocated;
    uint8_t node_len = 0;
    uint16_t trace_type = 0;
    // e2e geometry
    bool e2e_has_seq = false;
};

// One prebuilt extension header, ready to splice into a packet. The image
// is a complete EH (header + leading pad + options + tail pad); the insert
// unit is the options region padded to a 4-octet multiple, used when a
// packet already carries an EH of this kind.
class EncapBuffer {
public:
    bool empty() const { return image_.empty(); }
    std::span<const uint8_t> image() const { return image_; }
    std::span<const uint8_t> insert_unit() const {
        return std::span<const uint8_t>(unit_);
    }
    const std::vector<TemplateSlot>& slots() const { return slots_; }
    uint32_t options_offset() const { return kOptionsOffset; }

    static constexpr uint32_t kOptionsOffset = 4;  // EH header + 2-octet pad

    // Lays out one EH image: header, 2-octet pad so the first option lands
    // at 4n, each further option head-padded to 4n, tail pad to a multiple
    // of 8. Empty entry list yields an empty buffer.
    static EncapBuffer build(const std::vector<const EncapEntry*>& entries,
                             const OptionCodes& codes);

private:
    std::vector<uint8_t> image_;
    std::vector<uint8_t> unit_;
    std::vector<TemplateSlot> slots_;
};

struct EncapInterface {
    std::string dev;
    std::array<EncapBuffer, 2> buffers;  // indexed by EhKind
};

// Everything a node needs on the packet path, built once at registration.
// Immutable afterwards except the realloc counter.
class RegisteredNode {
public:
    uint32_t node_id() const { return node_id_; }
    const std::vector<InterfaceConfig>& interfaces() const { return interfaces_; }
    const InterfaceConfig* find_interface(std::string_view dev) const;
    const NamespaceTable& namespace_table() const { return ns_table_; }
    const std::optional<Ipv6Addr>& address() const { return address_; }
    const OptionCodes& codes() const { return codes_; }

    // Pre-encoded padding option, len 1..7.
    std::span<const uint8_t> padding(uint32_t len) const;

    const std::vector<EncapInterface>& encap_interfaces() const {
        return encap_interfaces_;
    }
    // Null when the interface has no encap slot; the returned buffer may
    // still be empty (the paired kind carrying no options).
    const EncapBuffer* encap_buffer(std::string_view dev, EhKind kind) const;

    uint64_t reallocs() const { return realloc_counter_.load(std::memory_order_relaxed); }
    void count_realloc() const {
        realloc_counter_.fetch_add(1, std::memory_order_relaxed);
    }

private:
    friend std::shared_ptr<const RegisteredNode> register_node(const NodeConfig&);

    uint32_t node_id_ = 0;
    std::vector<InterfaceConfig> interfaces_;
    NamespaceTable ns_table_;
    std::array<std::vector<uint8_t>, 7> paddings_;
    std::vector<EncapInterface> encap_interfaces_;
    std::optional<Ipv6Addr> address_;
    OptionCodes codes_{};
    mutable std::atomic<uint64_t> realloc_counter_{0};
};

// Validates the configuration and pre-builds every packet-path resource.
std::shared_ptr<const RegisteredNode> register_node(const NodeConfig& cfg);

const NamespaceConfig* lookup_namespace(const RegisteredNode& node,
                                        uint16_t namespace_id);

// Returns the prebuilt EH image for (dev, kind); throws
// Errc::no_encap_for_interface when nothing is configured for the pair.
std::vector<uint8_t> build_encap_buffer(const RegisteredNode& node,
                                        std::string_view dev, EhKind kind);

// Wire size of one encoded option template.
uint32_t template_size(const OptionTemplate& tmpl);

}  // namespace ioam
