#include "ioam/sim.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <cstring>

#include "ioam/bytes.hpp"
#include "ioam/pcap.hpp"

namespace ioam {

namespace {

constexpr uint32_t kSimEpochSec = 1600000000;

uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

uint64_t fnv1a(std::span<const uint8_t> bytes) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    return h;
}

uint64_t now_ns() {
    return static_cast<uint64_t>(
        std::chrono::duration_cast<std::chrono::nanoseconds>(
            std::chrono::steady_clock::now().time_since_epoch())
            .count());
}

}  // namespace

void RoleStats::merge(const RoleStats& other) {
    count += other.count;
    total_ns += other.total_ns;
    min_ns = std::min(min_ns, other.min_ns);
}

void NodeStats::merge(const NodeStats& other) {
    encap.merge(other.encap);
    transit.merge(other.transit);
    decap.merge(other.decap);
    reallocs += other.reallocs;
    splice_ops += other.splice_ops;
    inserted_bytes += other.inserted_bytes;
    decap_packets += other.decap_packets;
    drops += other.drops;
}

// ---------------------------------------------------------------------------
// Topology

Topology::Topology(std::vector<SimNode> nodes, std::vector<Link> links)
    : nodes_(std::move(nodes)), links_(std::move(links)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (!by_name_.emplace(nodes_[i].name, i).second)
            fail(Errc::bad_topology, "node " + nodes_[i].name + " appears twice");
        if (nodes_[i].ioam)
            name_by_ioam_id_.emplace(nodes_[i].ioam->node_id(), nodes_[i].name);
    }
    std::map<std::pair<std::string, std::string>, int> endpoint_use;
    for (const Link& link : links_) {
        for (const LinkEnd* end : {&link.a, &link.b}) {
            const auto it = by_name_.find(end->node);
            if (it == by_name_.end())
                fail(Errc::bad_topology, "link references unknown node " + end->node);
            const SimNode& n = nodes_[it->second];
            if (n.ioam && !n.ioam->find_interface(end->dev))
                fail(Errc::bad_topology, "link references unknown device " +
                                             end->node + "/" + end->dev);
            if (++endpoint_use[{end->node, end->dev}] > 1)
                fail(Errc::bad_topology, "endpoint " + end->node + "/" + end->dev +
                                             " used by two links");
        }
    }
}

const SimNode* Topology::find(const std::string& name) const {
    const auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : &nodes_[it->second];
}

std::size_t Topology::index_of(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end())
        fail(Errc::bad_topology, "unknown node " + name);
    return it->second;
}

const std::string* Topology::name_of_ioam_id(uint32_t node_id) const {
    const auto it = name_by_ioam_id_.find(node_id);
    return it == name_by_ioam_id_.end() ? nullptr : &it->second;
}

std::vector<Topology::Hop> Topology::route(const std::string& src,
                                           const std::string& dst) const {
    const std::size_t from = index_of(src);
    const std::size_t to = index_of(dst);

    // BFS over link adjacency
    struct Edge {
        std::size_t link = 0;
        std::size_t peer = 0;
        std::string out_dev, in_dev;
    };
    std::vector<std::vector<Edge>> adj(nodes_.size());
    for (std::size_t li = 0; li < links_.size(); ++li) {
        const Link& l = links_[li];
        const std::size_t ai = index_of(l.a.node);
        const std::size_t bi = index_of(l.b.node);
        adj[ai].push_back({li, bi, l.a.dev, l.b.dev});
        adj[bi].push_back({li, ai, l.b.dev, l.a.dev});
    }
    std::vector<int> prev(nodes_.size(), -1);
    std::vector<const Edge*> via(nodes_.size(), nullptr);
    std::vector<std::size_t> queue{from};
    prev[from] = static_cast<int>(from);
    for (std::size_t qi = 0; qi < queue.size() && prev[to] < 0; ++qi) {
        for (const Edge& e : adj[queue[qi]]) {
            if (prev[e.peer] >= 0) continue;
            prev[e.peer] = static_cast<int>(queue[qi]);
            via[e.peer] = &e;
            queue.push_back(e.peer);
        }
    }
    if (prev[to] < 0)
        fail(Errc::no_path, "no path from " + src + " to " + dst);

    std::vector<Hop> hops;
    for (std::size_t cur = to; cur != from; cur = static_cast<std::size_t>(prev[cur])) {
        Hop hop;
        hop.node_idx = cur;
        hop.in_dev = via[cur]->in_dev;
        hops.push_back(hop);
    }
    hops.push_back(Hop{from, "", "", 0, 0});
    std::reverse(hops.begin(), hops.end());
    for (std::size_t i = 0; i + 1 < hops.size(); ++i) {
        const Edge* e = via[hops[i + 1].node_idx];
        hops[i].out_dev = e->out_dev;
        hops[i].out_link = e->link;
        hops[i].out_mtu = links_[e->link].mtu;
    }
    return hops;
}

// ---------------------------------------------------------------------------
// traffic generation

bool fraction_selects(uint64_t index, double fraction) {
    if (fraction <= 0.0) return false;
    if (fraction >= 1.0) return true;
    const double inv = 1.0 / fraction;
    const uint64_t stride = static_cast<uint64_t>(inv + 0.5);
    if (stride >= 1 && std::fabs(inv - static_cast<double>(stride)) < 1e-9 * inv)
        return index % stride == 0;
    const long double f = fraction;
    return std::ceil(static_cast<long double>(index + 1) * f) >
           std::ceil(static_cast<long double>(index) * f);
}

std::vector<uint8_t> make_flow_packet(const FlowSpec& flow, const Ipv6Addr& src,
                                      const Ipv6Addr& dst, uint64_t index,
                                      uint64_t seed) {
    const uint32_t size = flow.packet_size;
    std::vector<uint8_t> out(size, 0);
    write_u32(out, 0, 6u << 28);
    write_u16(out, 4, static_cast<uint16_t>(size - kIpv6HeaderSize));
    out[6] = kProtoUdp;
    out[7] = 64;
    std::memcpy(out.data() + 8, src.data(), 16);
    std::memcpy(out.data() + 24, dst.data(), 16);
    // UDP header, checksum left zero
    write_u16(out, 40, 12000);
    write_u16(out, 42, 9);
    write_u16(out, 44, static_cast<uint16_t>(size - kIpv6HeaderSize));
    uint64_t state = splitmix64(seed ^ (index * 0x9e3779b97f4a7c15ull));
    for (std::size_t off = 48; off < size; off += 8) {
        state = splitmix64(state);
        for (std::size_t k = 0; k < 8 && off + k < size; ++k)
            out[off + k] = static_cast<uint8_t>(state >> (8 * k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// flow execution

namespace {

struct VectorSink final : TelemetrySink {
    std::vector<TelemetryRecord>* out;
    explicit VectorSink(std::vector<TelemetryRecord>* o) : out(o) {}
    void capture(TelemetryRecord&& rec) override { out->push_back(std::move(rec)); }
};

struct Shard {
    std::vector<NodeStats> stats;
    std::vector<TelemetryRecord> records;
    uint64_t generated = 0;
    uint64_t delivered = 0;
    uint64_t dropped = 0;
    uint64_t delivered_bytes = 0;
    uint64_t digest = 0;
};

struct RunSetup {
    const Topology* topo = nullptr;
    const FlowSpec* flow = nullptr;
    std::vector<Topology::Hop> hops;
    Ipv6Addr src_addr{};
    Ipv6Addr dst_addr{};
    uint64_t seed = 0;
    LinkCapture* capture = nullptr;
};

void run_one(const RunSetup& rs, uint64_t index, Shard& sh) {
    const auto raw = make_flow_packet(*rs.flow, rs.src_addr, rs.dst_addr, index,
                                      rs.seed);
    RawPacket pkt(raw, rs.flow->headroom);
    ++sh.generated;
    const bool encap_this = fraction_selects(index, rs.flow->ioam_fraction);
    VectorSink sink(&sh.records);
    const WallClock clock{kSimEpochSec + static_cast<uint32_t>(index / 1000),
                          static_cast<uint32_t>(index % 1000) * 1000000u};

    for (std::size_t h = 0; h < rs.hops.size(); ++h) {
        const Topology::Hop& hop = rs.hops[h];
        const SimNode& node = rs.topo->nodes()[hop.node_idx];
        if (node.ioam) {
            const uint64_t t0 = now_ns();
            const ProcessResult res =
                process_packet(*node.ioam, hop.in_dev, hop.out_dev, pkt, clock,
                               index, &sink, encap_this);
            const uint64_t ns = now_ns() - t0;
            NodeStats& st = sh.stats[hop.node_idx];
            if (res.dropped) {
                ++st.drops;
                ++sh.dropped;
                return;
            }
            if (res.removed) {
                st.decap.add(ns);
                ++st.decap_packets;
            } else if (res.inserted) {
                st.encap.add(ns);
            } else if (res.updated) {
                st.transit.add(ns);
            }
            st.splice_ops += res.splice_ops;
            if (res.inserted) st.inserted_bytes += res.inserted_bytes;
        }
        if (h + 1 < rs.hops.size()) {
            if (pkt.size() > hop.out_mtu) {
                ++sh.dropped;
                return;
            }
            if (rs.capture && hop.out_link < rs.capture->writers.size() &&
                rs.capture->writers[hop.out_link])
                rs.capture->writers[hop.out_link]->write(
                    pkt.bytes(), clock.sec, static_cast<uint32_t>(index % 1000));
            auto bytes = pkt.bytes();
            if (h > 0 && bytes[7] > 0) --bytes[7];  // forwarded, not originated
        }
    }
    ++sh.delivered;
    sh.delivered_bytes += pkt.size();
    sh.digest += splitmix64(fnv1a(pkt.bytes()) ^
                            (index * 0xd1342543de82ef95ull));
}

SimReport assemble(const Topology& topo, std::vector<Shard>& shards,
                   const std::vector<uint64_t>& reallocs_before,
                   double elapsed_sec, unsigned workers) {
    SimReport rep;
    rep.elapsed_sec = elapsed_sec;
    rep.workers = workers;
    std::vector<NodeStats> totals(topo.nodes().size());
    for (Shard& sh : shards) {
        rep.generated += sh.generated;
        rep.delivered += sh.delivered;
        rep.dropped += sh.dropped;
        rep.delivered_bytes += sh.delivered_bytes;
        rep.stream_digest += sh.digest;
        for (std::size_t i = 0; i < totals.size(); ++i) totals[i].merge(sh.stats[i]);
        rep.records.insert(rep.records.end(),
                           std::make_move_iterator(sh.records.begin()),
                           std::make_move_iterator(sh.records.end()));
    }
    for (std::size_t i = 0; i < topo.nodes().size(); ++i) {
        const SimNode& n = topo.nodes()[i];
        if (n.ioam)
            totals[i].reallocs = n.ioam->reallocs() - reallocs_before[i];
        rep.node_stats.emplace(n.name, totals[i]);
    }
    return rep;
}

RunSetup make_setup(const Topology& topo, const FlowSpec& flow, uint64_t seed,
                    LinkCapture* capture) {
    if (flow.packet_size < 48)
        fail(Errc::bad_params, "packet size below the 48-octet minimum");
    if (flow.ioam_fraction < 0.0 || flow.ioam_fraction > 1.0)
        fail(Errc::bad_params, "ioam fraction outside [0, 1]");
    RunSetup rs;
    rs.topo = &topo;
    rs.flow = &flow;
    rs.hops = topo.route(flow.src, flow.dst);
    rs.src_addr = topo.nodes()[rs.hops.front().node_idx].address;
    rs.dst_addr = topo.nodes()[rs.hops.back().node_idx].address;
    rs.seed = seed;
    rs.capture = capture;
    return rs;
}

std::vector<uint64_t> snapshot_reallocs(const Topology& topo) {
    std::vector<uint64_t> out(topo.nodes().size(), 0);
    for (std::size_t i = 0; i < topo.nodes().size(); ++i)
        if (topo.nodes()[i].ioam) out[i] = topo.nodes()[i].ioam->reallocs();
    return out;
}

}  // namespace

SimReport run_flow_serial(const Topology& topo, const FlowSpec& flow,
                          uint64_t seed, LinkCapture* capture) {
    const RunSetup rs = make_setup(topo, flow, seed, capture);
    const auto reallocs_before = snapshot_reallocs(topo);
    std::vector<Shard> shards(1);
    shards[0].stats.resize(topo.nodes().size());

    const uint64_t t0 = now_ns();
    if (flow.duration_sec > 0) {
        const uint64_t budget_ns =
            static_cast<uint64_t>(flow.duration_sec * 1e9);
        uint64_t index = 0;
        while (now_ns() - t0 < budget_ns) {
            for (int k = 0; k < 512; ++k) run_one(rs, index++, shards[0]);
        }
    } else {
        for (uint64_t i = 0; i < flow.count; ++i) run_one(rs, i, shards[0]);
    }
    const double elapsed = static_cast<double>(now_ns() - t0) / 1e9;
    return assemble(topo, shards, reallocs_before, elapsed, 1);
}

SimReport run_flow_parallel(const Topology& topo, const FlowSpec& flow,
                            uint64_t seed, unsigned workers) {
    if (flow.duration_sec > 0)
        fail(Errc::bad_params, "duration-bound flows run on the serial lane");
    const RunSetup rs = make_setup(topo, flow, seed, nullptr);
    const auto reallocs_before = snapshot_reallocs(topo);
    std::vector<Shard> shards(workers);
    for (Shard& sh : shards) sh.stats.resize(topo.nodes().size());
    const uint64_t n = flow.count;

    const uint64_t t0 = now_ns();
#pragma omp parallel num_threads(static_cast<int>(workers))
    {
        const unsigned team = static_cast<unsigned>(omp_get_num_threads());
        const unsigned w = static_cast<unsigned>(omp_get_thread_num());
        // contiguous index ranges keep the merged record order equal to
        // the serial lane's
        const uint64_t begin = n * w / team;
        const uint64_t end = n * (w + 1) / team;
        for (uint64_t i = begin; i < end; ++i) run_one(rs, i, shards[w]);
    }
    const double elapsed = static_cast<double>(now_ns() - t0) / 1e9;
    return assemble(topo, shards, reallocs_before, elapsed, workers);
}

SimReport run_flow(const Topology& topo, const FlowSpec& flow, uint64_t seed,
                   unsigned workers, LinkCapture* capture) {
    if (workers <= 1 || capture || flow.duration_sec > 0)
        return run_flow_serial(topo, flow, seed, capture);
    return run_flow_parallel(topo, flow, seed, workers);
}

std::vector<std::string> reconstruct_path(const TelemetryRecord& record,
                                          const Topology& topo) {
    std::vector<std::string> out;
    out.reserve(record.entries.size());
    for (const NodeDataEntry& e : record.entries) {
        if (const std::string* name = topo.name_of_ioam_id(e.node_id))
            out.push_back(*name);
        else
            out.push_back("node-" + std::to_string(e.node_id));
    }
    return out;
}

unsigned workers_from_env() {
    const char* env = std::getenv("IOAMSIM_WORKERS");
    if (!env || !*env) return 1;
    const long v = std::strtol(env, nullptr, 10);
    if (v < 1) return 1;
    if (v > 64) return 64;
    return static_cast<unsigned>(v);
}

}  // namespace ioam
