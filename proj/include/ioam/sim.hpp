#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "ioam/datapath.hpp"
#include "ioam/node.hpp"

namespace ioam {

class PcapWriter;

struct LinkEnd {
    std::string node;
    std::string dev;
};

struct Link {
    LinkEnd a;
    LinkEnd b;
    uint32_t mtu = 1500;
};

struct SimNode {
    std::string name;
    Ipv6Addr address{};
    std::shared_ptr<const RegisteredNode> ioam;  // null: plain forwarder
};

class Topology {
public:
    Topology(std::vector<SimNode> nodes, std::vector<Link> links);

    const std::vector<SimNode>& nodes() const { return nodes_; }
    const std::vector<Link>& links() const { return links_; }
    const SimNode* find(const std::string& name) const;
    std::size_t index_of(const std::string& name) const;  // throws bad_topology
    const std::string* name_of_ioam_id(uint32_t node_id) const;

    struct Hop {
        std::size_t node_idx = 0;
        std::string in_dev;   // empty at the source
        std::string out_dev;  // empty at the sink
        uint32_t out_mtu = 0;
        std::size_t out_link = 0;  // index into links()
    };
    // Shortest simple path; throws Errc::no_path.
    std::vector<Hop> route(const std::string& src, const std::string& dst) const;

private:
    std::vector<SimNode> nodes_;
    std::vector<Link> links_;
    std::map<std::string, std::size_t> by_name_;
    std::map<uint32_t, std::string> name_by_ioam_id_;
};

Topology load_topology(const std::string& path);
Topology topology_from_json_text(const std::string& text);
NodeConfig node_config_from_json_text(const std::string& text);

// Programmatic five-node chain (Alpha, Athos, Porthos, Aramis, Beta) with
// the domain boundaries at Athos (encap) and Aramis (decap); every knob
// the benchmarks sweep is explicit here.
struct DomainParams {
    uint32_t namespaces = 1;           // one trace option per namespace
    uint32_t options_per_namespace = 1;
    uint16_t trace_type = kTraceHopNode;
    uint8_t capacity = 3;              // node-data slots per trace
    TraceVariant variant = TraceVariant::PreAllocated;
    bool registered = true;            // false: plain forwarders everywhere
    uint32_t mtu = 1500;
    uint16_t first_namespace = 7;
};

Topology make_domain(const DomainParams& params);

struct FlowSpec {
    std::string src;
    std::string dst;
    uint32_t packet_size = 1200;  // total octets, >= 48
    uint64_t count = 10000;
    double duration_sec = 0;     // > 0: run until elapsed (count becomes a cap per batch)
    double ioam_fraction = 1.0;  // share of packets the ingress encapsulates
    std::size_t headroom = 256;  // spare prefix octets per generated packet
};

struct RoleStats {
    uint64_t count = 0;
    uint64_t total_ns = 0;
    uint64_t min_ns = UINT64_MAX;

    void add(uint64_t ns) {
        ++count;
        total_ns += ns;
        if (ns < min_ns) min_ns = ns;
    }
    void merge(const RoleStats& other);
    double mean_ns() const { return count ? double(total_ns) / double(count) : 0.0; }
};

struct NodeStats {
    RoleStats encap, transit, decap;
    uint64_t reallocs = 0;
    uint64_t splice_ops = 0;
    uint64_t inserted_bytes = 0;
    uint64_t decap_packets = 0;
    uint64_t drops = 0;

    void merge(const NodeStats& other);
};

struct SimReport {
    uint64_t generated = 0;
    uint64_t delivered = 0;
    uint64_t dropped = 0;
    uint64_t delivered_bytes = 0;
    std::map<std::string, NodeStats> node_stats;
    std::vector<TelemetryRecord> records;  // packet order
    uint64_t stream_digest = 0;  // position-aware digest of delivered bytes
    double elapsed_sec = 0;
    unsigned workers = 1;
};

// Deterministic selection: with an integral 1/f every (1/f)-th packet is
// chosen, starting at index 0; otherwise a Bresenham rule keeping the
// selected count at ceil(f * n).
bool fraction_selects(uint64_t index, double fraction);

// Deterministic UDP-in-IPv6 packet for this flow position.
std::vector<uint8_t> make_flow_packet(const FlowSpec& flow, const Ipv6Addr& src,
                                      const Ipv6Addr& dst, uint64_t index,
                                      uint64_t seed);

// Per-link capture, usable with the serial lane only.
struct LinkCapture {
    std::vector<std::unique_ptr<PcapWriter>> writers;  // indexed like links()
};

// Pushes every generated packet through each node on the route. Timing is
// measured around the per-node pipeline only. workers == 1 runs the
// serial reference lane; > 1 shards packet indices across OpenMP threads
// and produces the identical packet stream and record order.
SimReport run_flow(const Topology& topo, const FlowSpec& flow, uint64_t seed,
                   unsigned workers = 1, LinkCapture* capture = nullptr);
SimReport run_flow_serial(const Topology& topo, const FlowSpec& flow,
                          uint64_t seed, LinkCapture* capture = nullptr);
SimReport run_flow_parallel(const Topology& topo, const FlowSpec& flow,
                            uint64_t seed, unsigned workers);

// Maps recorded node ids back to topology names (trace-type bit 0).
std::vector<std::string> reconstruct_path(const TelemetryRecord& record,
                                          const Topology& topo);

unsigned workers_from_env();  // IOAMSIM_WORKERS, default 1

}  // namespace ioam
