// ioamsim: userspace IOAM-for-IPv6 datapath driver.
//   bench     parameterized throughput / delay experiments, CSV output
//   inspect   decode one packet (hex string or pcap) with alignment verdicts
//   simulate  run a flow through a topology file, dump telemetry

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

#include "CLI11.hpp"

#include "ioam/datapath.hpp"
#include "ioam/pcap.hpp"
#include "ioam/sim.hpp"

using namespace ioam;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

// ---------------------------------------------------------------------------
// bench

struct BenchParams {
    std::vector<std::string> experiments{"e1", "e2", "e3", "e4", "e5"};
    std::vector<double> fractions{0, 0.0001, 0.001, 0.01, 0.02, 0.10, 0.25, 0.50, 1.0};
    unsigned options = 11;
    unsigned namespaces = 7;
    uint32_t packet_size = 1200;
    uint64_t packets = 20000;
    unsigned runs = 5;
    uint64_t seed = 1;
    long headroom = -1;  // <0: size the headroom for six narrow options
    std::string out = "bench.csv";
};

constexpr uint16_t kNarrowTraceType = kTraceHopNode;
constexpr uint16_t kWideTraceType = kTraceHopNode | kTraceTsSec | kTraceTsSubsec;

// Growth a packet sees at the encap node for k narrow options: the whole
// prebuilt EH image.
std::size_t encap_growth(unsigned options, uint16_t trace_type) {
    DomainParams params;
    params.namespaces = 1;
    params.options_per_namespace = options;
    params.trace_type = trace_type;
    const Topology topo = make_domain(params);
    return build_encap_buffer(*topo.find("Athos")->ioam, "eth1", EhKind::HopByHop)
        .size();
}

struct BenchRow {
    std::string experiment;
    std::string param;
    std::string run;  // index or "mean"
    double pps = 0;
    double bps = 0;
    double encap_ns = 0;
    double transit_ns = 0;
    double decap_ns = 0;
    uint64_t reallocs = 0;
};

double role_min(const SimReport& rep, RoleStats NodeStats::* role) {
    uint64_t best = UINT64_MAX;
    for (const auto& [name, stats] : rep.node_stats) {
        const RoleStats& rs = stats.*role;
        if (rs.count > 0) best = std::min(best, rs.min_ns);
    }
    return best == UINT64_MAX ? 0.0 : static_cast<double>(best);
}

BenchRow measure(const std::string& experiment, const std::string& param,
                 unsigned run, const Topology& topo, const FlowSpec& flow,
                 uint64_t seed, unsigned workers) {
    const SimReport rep = run_flow(topo, flow, seed, workers);
    BenchRow row;
    row.experiment = experiment;
    row.param = param;
    row.run = std::to_string(run);
    row.pps = static_cast<double>(rep.generated) / rep.elapsed_sec;
    row.bps = static_cast<double>(rep.delivered_bytes) / rep.elapsed_sec;
    row.encap_ns = role_min(rep, &NodeStats::encap);
    row.transit_ns = role_min(rep, &NodeStats::transit);
    row.decap_ns = role_min(rep, &NodeStats::decap);
    for (const auto& [name, stats] : rep.node_stats) row.reallocs += stats.reallocs;
    return row;
}

BenchRow mean_of(std::vector<BenchRow> rows) {
    BenchRow mean = rows.front();
    mean.run = "mean";
    mean.pps = mean.bps = mean.encap_ns = mean.transit_ns = mean.decap_ns = 0;
    mean.reallocs = 0;
    for (const BenchRow& row : rows) {
        mean.pps += row.pps;
        mean.bps += row.bps;
        mean.encap_ns += row.encap_ns;
        mean.transit_ns += row.transit_ns;
        mean.decap_ns += row.decap_ns;
        mean.reallocs += row.reallocs;
    }
    const double n = static_cast<double>(rows.size());
    mean.pps /= n;
    mean.bps /= n;
    mean.encap_ns /= n;
    mean.transit_ns /= n;
    mean.decap_ns /= n;
    mean.reallocs = static_cast<uint64_t>(std::llround(double(mean.reallocs) / n));
    return mean;
}

void run_point(std::vector<BenchRow>& out, const std::string& experiment,
               const std::string& param, const Topology& topo, FlowSpec flow,
               const BenchParams& bp, unsigned workers) {
    std::vector<BenchRow> rows;
    for (unsigned run = 0; run < bp.runs; ++run)
        rows.push_back(
            measure(experiment, param, run, topo, flow, bp.seed + run, workers));
    const BenchRow mean = mean_of(rows);
    out.insert(out.end(), rows.begin(), rows.end());
    out.push_back(mean);
}

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

// Largest insertion the sweep will perform; packets are sized so even
// that case respects the default 1500-octet MTU, keeping the measured
// packet size constant across the sweep.
uint32_t clamp_pkt_size(uint32_t requested, std::size_t max_growth) {
    const uint32_t limit = max_growth >= 1500
                               ? 48
                               : static_cast<uint32_t>(1500 - max_growth);
    if (requested > limit) {
        std::cout << "pkt-size clamped to " << limit
                  << " so the largest insertion respects the MTU\n";
        return limit;
    }
    return requested;
}

std::size_t sweep_growth(unsigned namespaces, unsigned options, uint16_t trace_type) {
    DomainParams params;
    params.namespaces = namespaces;
    params.options_per_namespace = options;
    params.trace_type = trace_type;
    const Topology topo = make_domain(params);
    return build_encap_buffer(*topo.find("Athos")->ioam, "eth1", EhKind::HopByHop)
        .size();
}

int cmd_bench(const BenchParams& bp) {
    const std::size_t headroom =
        bp.headroom >= 0 ? static_cast<std::size_t>(bp.headroom)
                         : encap_growth(6, kNarrowTraceType);
    const unsigned workers = workers_from_env();

    FlowSpec base;
    base.src = "Alpha";
    base.dst = "Beta";
    base.packet_size = bp.packet_size;
    base.count = bp.packets;
    base.headroom = headroom;

    std::vector<BenchRow> rows;
    const auto wants = [&](const std::string& e) {
        return std::find(bp.experiments.begin(), bp.experiments.end(), e) !=
               bp.experiments.end();
    };

    if (wants("e1")) {
        // baseline: plain forwarders, registered but passive, full insertion
        DomainParams plain;
        plain.registered = false;
        DomainParams reg;
        for (int mode = 0; mode < 3; ++mode) {
            const Topology topo = make_domain(mode == 0 ? plain : reg);
            FlowSpec flow = base;
            flow.ioam_fraction = mode == 2 ? 1.0 : 0.0;
            run_point(rows, "e1", std::to_string(mode), topo, flow, bp, workers);
        }
    }
    if (wants("e2")) {
        const Topology topo = make_domain(DomainParams{});
        for (double f : bp.fractions) {
            FlowSpec flow = base;
            flow.ioam_fraction = f;
            run_point(rows, "e2", format_double(f), topo, flow, bp, workers);
        }
    }
    if (wants("e3")) {
        FlowSpec flow = base;
        flow.ioam_fraction = 1.0;
        flow.packet_size = clamp_pkt_size(
            base.packet_size, sweep_growth(1, bp.options, kNarrowTraceType));
        for (unsigned k = 1; k <= bp.options; ++k) {
            DomainParams params;
            params.options_per_namespace = k;
            params.trace_type = kNarrowTraceType;
            const Topology topo = make_domain(params);
            run_point(rows, "e3", std::to_string(k), topo, flow, bp, workers);
        }
    }
    for (const char* exp : {"e4", "e5"}) {
        if (!wants(exp)) continue;
        FlowSpec flow = base;
        flow.ioam_fraction = 1.0;
        flow.packet_size = clamp_pkt_size(
            base.packet_size, sweep_growth(bp.namespaces, 1, kWideTraceType));
        for (unsigned k = 1; k <= bp.namespaces; ++k) {
            DomainParams params;
            params.namespaces = k;
            params.trace_type = kWideTraceType;
            const Topology topo = make_domain(params);
            run_point(rows, exp, std::to_string(k), topo, flow, bp, workers);
        }
    }

    std::ofstream out(bp.out);
    if (!out) fail(Errc::io_error, "cannot open " + bp.out + " for writing");
    out << "experiment,param,run,pps,bps,encap_ns,transit_ns,decap_ns,reallocs\n";
    for (const BenchRow& row : rows)
        out << row.experiment << ',' << row.param << ',' << row.run << ','
            << format_double(row.pps) << ',' << format_double(row.bps) << ','
            << format_double(row.encap_ns) << ',' << format_double(row.transit_ns)
            << ',' << format_double(row.decap_ns) << ',' << row.reallocs << '\n';
    std::cout << "wrote " << rows.size() << " rows to " << bp.out << " (headroom "
              << headroom << ", workers " << workers << ")\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------
// inspect

void print_option(const EhOption& opt) {
    std::printf("    [offset %3u] %-10s %u octets", opt.offset,
                option_kind_name(opt.kind), opt.total_len);
    if (opt.kind == EhOptionKind::Unknown)
        std::printf(" type=0x%02x", opt.type);
    if (opt.trace)
        std::printf(" %s ns=%u trace_type=0x%02x node_len=%u remaining=%u%s entries=%zu",
                    opt.trace->variant == TraceVariant::PreAllocated ? "pre_allocated"
                                                                     : "incremental",
                    opt.trace->namespace_id, opt.trace->trace_type, opt.trace->node_len,
                    opt.trace->remaining_len, opt.trace->overflow() ? " OVERFLOW" : "",
                    opt.trace->node_data.size());
    if (opt.e2e)
        std::printf(" ns=%u e2e_type=0x%x seq=%llu", opt.e2e->namespace_id,
                    opt.e2e->e2e_type,
                    static_cast<unsigned long long>(opt.e2e->seq_num));
    if (opt.pot)
        std::printf(" ns=%u opaque=%zu octets", opt.pot->namespace_id,
                    opt.pot->opaque_body.size());
    const bool ioam = opt.kind == EhOptionKind::IoamTrace ||
                      opt.kind == EhOptionKind::IoamPot ||
                      opt.kind == EhOptionKind::IoamE2E;
    if (ioam) std::printf("  (%s)", opt.offset % 4 == 0 ? "4n OK" : "4n BAD");
    std::printf("\n");
    if (opt.trace)
        for (const auto& e : opt.trace->node_data)
            std::printf("        hop_limit=%u node_id=%u ts=%u.%09u if=%u/%u\n",
                        e.hop_limit, e.node_id, e.timestamp_sec, e.timestamp_subsec,
                        e.ingress_if_id, e.egress_if_id);
}

void inspect_packet(std::span<const uint8_t> bytes, std::size_t index) {
    const PacketView view = parse_packet(bytes);
    std::printf("packet %zu: %zu octets  src=%s  dst=%s  hop_limit=%u\n", index,
                bytes.size(), addr_to_string(view.hdr.src).c_str(),
                addr_to_string(view.hdr.dst).c_str(), view.hdr.hop_limit);
    for (uint32_t e = 0; e < view.eh_count; ++e) {
        const EhRef& eh = view.eh_chain[e];
        std::printf("  %s at %u, %u octets  (%s)\n", eh_kind_name(eh.kind), eh.offset,
                    eh.size, eh.size % 8 == 0 ? "len%8 OK" : "len%8 BAD");
        for (const EhOption& opt :
             parse_options(bytes.subspan(eh.offset, eh.size)))
            print_option(opt);
    }
    std::printf("  payload: %u octets, protocol %u\n", view.payload_size,
                view.payload_protocol);
}

int cmd_inspect(const std::string& hex, const std::string& pcap_path) {
    std::vector<std::vector<uint8_t>> packets;
    if (!hex.empty()) {
        packets.push_back(from_hex(hex));
    } else {
        PcapReader reader(pcap_path);
        while (auto rec = reader.next()) packets.push_back(std::move(rec->bytes));
    }
    for (std::size_t i = 0; i < packets.size(); ++i) inspect_packet(packets[i], i);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(const std::string& topology_path, const std::string& flow_arg,
                 double fraction, uint64_t packets, uint64_t seed,
                 uint32_t packet_size, long headroom, double duration,
                 const std::string& csv_path, const std::string& pcap_dir) {
    const Topology topo = load_topology(topology_path);

    FlowSpec flow;
    const auto comma = flow_arg.find(',');
    if (comma == std::string::npos)
        fail(Errc::bad_params, "--flow wants src,dst");
    flow.src = flow_arg.substr(0, comma);
    flow.dst = flow_arg.substr(comma + 1);
    flow.ioam_fraction = fraction;
    flow.count = packets;
    flow.packet_size = packet_size;
    flow.duration_sec = duration;
    if (headroom >= 0) flow.headroom = static_cast<std::size_t>(headroom);

    LinkCapture capture;
    LinkCapture* capture_ptr = nullptr;
    if (!pcap_dir.empty()) {
        for (std::size_t i = 0; i < topo.links().size(); ++i) {
            const Link& l = topo.links()[i];
            capture.writers.push_back(std::make_unique<PcapWriter>(
                pcap_dir + "/" + l.a.node + "-" + l.b.node + ".pcap"));
        }
        capture_ptr = &capture;
    }

    const SimReport rep =
        run_flow(topo, flow, seed, workers_from_env(), capture_ptr);

    std::printf("generated %llu, delivered %llu (%llu bytes), dropped %llu\n",
                (unsigned long long)rep.generated, (unsigned long long)rep.delivered,
                (unsigned long long)rep.delivered_bytes,
                (unsigned long long)rep.dropped);
    std::printf("elapsed %.3fs (%.0f pps, %u worker%s)\n", rep.elapsed_sec,
                double(rep.generated) / rep.elapsed_sec, rep.workers,
                rep.workers == 1 ? "" : "s");
    for (const auto& [name, st] : rep.node_stats) {
        if (st.encap.count + st.transit.count + st.decap.count + st.reallocs == 0)
            continue;
        std::printf("%-10s", name.c_str());
        const auto role = [](const char* tag, const RoleStats& rs) {
            if (rs.count)
                std::printf("  %s min/mean %llu/%.0f ns (%llu pkts)", tag,
                            (unsigned long long)rs.min_ns, rs.mean_ns(),
                            (unsigned long long)rs.count);
        };
        role("encap", st.encap);
        role("transit", st.transit);
        role("decap", st.decap);
        if (st.reallocs) std::printf("  reallocs %llu", (unsigned long long)st.reallocs);
        std::printf("\n");
    }

    std::ostream* out = &std::cout;
    std::ofstream csv;
    if (!csv_path.empty()) {
        csv.open(csv_path);
        if (!csv) fail(Errc::io_error, "cannot open " + csv_path);
        out = &csv;
    }
    *out << "seq\tns\tpath\n";
    for (const TelemetryRecord& rec : rep.records) {
        *out << rec.packet_seq << '\t' << rec.namespace_id << '\t';
        for (std::size_t i = 0; i < rec.entries.size(); ++i) {
            if (i) *out << ',';
            *out << rec.entries[i].node_id;
        }
        *out << '\n';
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"userspace IOAM-for-IPv6 datapath, simulator, and benchmarks"};
    app.require_subcommand(1);

    BenchParams bp;
    CLI::App* bench = app.add_subcommand("bench", "run the benchmark experiments");
    bench->add_option("--experiment", bp.experiments,
                      "subset of e1 e2 e3 e4 e5 (default: all)");
    bench->add_option("--fractions", bp.fractions, "insertion fractions for e2");
    bench->add_option("--options", bp.options, "max trace options for e3");
    bench->add_option("--namespaces", bp.namespaces, "max namespaces for e4/e5");
    bench->add_option("--pkt-size", bp.packet_size, "generated packet size");
    bench->add_option("--packets", bp.packets, "packets per run");
    bench->add_option("--runs", bp.runs, "runs per data point");
    bench->add_option("--seed", bp.seed, "base seed");
    bench->add_option("--headroom", bp.headroom,
                      "packet headroom (default: six options' growth)");
    bench->add_option("--out", bp.out, "CSV output path");

    std::string hex, pcap_path;
    CLI::App* inspect = app.add_subcommand("inspect", "decode and verify one packet");
    inspect->add_option("--hex", hex, "packet as lowercase hex");
    inspect->add_option("--pcap", pcap_path, "pcap file (raw-IP link type)");

    std::string topology_path, flow_arg = "Alpha,Beta", csv_path, pcap_dir;
    double fraction = 1.0, duration = 0;
    uint64_t packets = 1000, seed = 1;
    uint32_t packet_size = 1200;
    long sim_headroom = -1;
    CLI::App* simulate = app.add_subcommand("simulate", "run a flow through a topology");
    simulate->add_option("--topology", topology_path, "topology JSON file")
        ->required();
    simulate->add_option("--flow", flow_arg, "src,dst node names");
    simulate->add_option("--fraction", fraction, "share of packets to encapsulate");
    simulate->add_option("--packets", packets, "packet count");
    simulate->add_option("--seed", seed, "flow seed");
    simulate->add_option("--pkt-size", packet_size, "generated packet size");
    simulate->add_option("--headroom", sim_headroom, "per-packet headroom");
    simulate->add_option("--duration", duration, "run for this many seconds instead");
    simulate->add_option("--csv", csv_path, "write telemetry dump here");
    simulate->add_option("--pcap-dir", pcap_dir, "capture every link into this dir");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (bench->parsed()) return cmd_bench(bp);
        if (inspect->parsed()) {
            if (hex.empty() == pcap_path.empty()) {
                std::cerr << "inspect wants exactly one of --hex or --pcap\n";
                return kExitUsage;
            }
            return cmd_inspect(hex, pcap_path);
        }
        if (simulate->parsed())
            return cmd_simulate(topology_path, flow_arg, fraction, packets, seed,
                                packet_size, sim_headroom, duration, csv_path,
                                pcap_dir);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
