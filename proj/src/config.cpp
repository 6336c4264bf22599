#include <fstream>
#include <sstream>

#include "json.hpp"

#include "ioam/sim.hpp"

namespace ioam {

namespace {

using nlohmann::json;

InterfaceConfig interface_from_json(const json& j) {
    InterfaceConfig ifc;
    ifc.dev_name = j.at("dev_name").get<std::string>();
    ifc.ioam_if_id = j.at("ioam_if_id").get<uint16_t>();
    for (const auto& role : j.value("role", json::array())) {
        const auto r = role.get<std::string>();
        if (r == "ingress")
            ifc.ingress = true;
        else if (r == "egress")
            ifc.egress = true;
        else
            fail(Errc::bad_params, "unknown interface role " + r);
    }
    return ifc;
}

OptionTemplate template_from_json(const json& j, uint16_t namespace_id) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "pre_allocated_trace" || kind == "incremental_trace") {
        IoamTraceOption trace;
        trace.variant = kind == "pre_allocated_trace" ? TraceVariant::PreAllocated
                                                      : TraceVariant::Incremental;
        trace.namespace_id = namespace_id;
        trace.trace_type = j.value("trace_type", kTraceHopNode);
        trace.node_len = static_cast<uint8_t>(node_data_len(trace.trace_type) / 4);
        if (trace.variant == TraceVariant::PreAllocated)
            trace.remaining_len = j.value("capacity", uint8_t{3});
        return trace;
    }
    if (kind == "e2e") {
        IoamE2EOption e2e;
        e2e.namespace_id = namespace_id;
        e2e.e2e_type = j.value("e2e_type", kE2eSeqNum);
        return e2e;
    }
    if (kind == "pot") {
        IoamPotOption pot;
        pot.namespace_id = namespace_id;
        if (j.contains("opaque_hex"))
            pot.opaque_body = from_hex(j.at("opaque_hex").get<std::string>());
        else
            pot.opaque_body.assign(j.value("opaque_len", 8), 0);
        return pot;
    }
    fail(Errc::bad_params, "unknown option template kind " + kind);
}

NodeConfig node_config_from_json(const json& j) {
    NodeConfig cfg;
    cfg.ioam_node_id = j.at("ioam_node_id").get<uint32_t>();
    for (const auto& ji : j.value("interfaces", json::array()))
        cfg.interfaces.push_back(interface_from_json(ji));
    for (const auto& jn : j.value("namespaces", json::array())) {
        NamespaceConfig ns;
        ns.namespace_id = jn.at("namespace_id").get<uint16_t>();
        ns.remove_on_transit = jn.value("remove_on_transit", false);
        cfg.namespaces.push_back(ns);
    }
    for (const auto& je : j.value("encaps", json::array())) {
        EncapEntry entry;
        entry.namespace_id = je.at("namespace_id").get<uint16_t>();
        entry.egress_dev = je.at("egress_dev").get<std::string>();
        const auto kind = je.value("eh_kind", std::string("hop_by_hop"));
        if (kind == "hop_by_hop")
            entry.eh_kind = EhKind::HopByHop;
        else if (kind == "destination")
            entry.eh_kind = EhKind::Destination;
        else
            fail(Errc::bad_params, "unknown eh_kind " + kind);
        entry.option_template =
            template_from_json(je.at("option_template"), entry.namespace_id);
        cfg.encaps.push_back(entry);
    }
    return cfg;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::io_error, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) fail(Errc::parse_error, path + " is not valid JSON");
    return j;
}

// "ioam" is either an inline object or the path of a per-node config
// file, resolved against the topology file's directory.
Topology topology_from_json(const json& j, const std::string& base_dir) {
    std::vector<SimNode> nodes;
    for (const auto& jn : j.at("nodes")) {
        SimNode node;
        node.name = jn.at("name").get<std::string>();
        if (jn.contains("address"))
            node.address = parse_addr(jn.at("address").get<std::string>());
        else
            node.address = make_addr(0xfd00,
                                     static_cast<uint16_t>(nodes.size() + 1));
        if (jn.contains("ioam") && !jn.at("ioam").is_null()) {
            json cfg_json = jn.at("ioam");
            if (cfg_json.is_string()) {
                std::string path = cfg_json.get<std::string>();
                if (!path.empty() && path[0] != '/' && !base_dir.empty())
                    path = base_dir + "/" + path;
                cfg_json = load_json_file(path);
            }
            NodeConfig cfg = node_config_from_json(cfg_json);
            cfg.address = node.address;
            node.ioam = register_node(cfg);
        }
        nodes.push_back(std::move(node));
    }
    std::vector<Link> links;
    for (const auto& jl : j.at("links")) {
        Link link;
        link.a = {jl.at("a").at(0).get<std::string>(),
                  jl.at("a").at(1).get<std::string>()};
        link.b = {jl.at("b").at(0).get<std::string>(),
                  jl.at("b").at(1).get<std::string>()};
        link.mtu = jl.value("mtu", 1500u);
        links.push_back(std::move(link));
    }
    return Topology(std::move(nodes), std::move(links));
}

json parse_json(const std::string& text, const std::string& origin) {
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded())
        fail(Errc::parse_error, origin + " is not valid JSON");
    return j;
}

}  // namespace

Topology topology_from_json_text(const std::string& text) {
    return topology_from_json(parse_json(text, "topology"), "");
}

Topology load_topology(const std::string& path) {
    const auto slash = path.find_last_of('/');
    const std::string base_dir =
        slash == std::string::npos ? "" : path.substr(0, slash);
    return topology_from_json(load_json_file(path), base_dir);
}

NodeConfig node_config_from_json_text(const std::string& text) {
    return node_config_from_json(parse_json(text, "node config"));
}

// ---------------------------------------------------------------------------
// programmatic five-node domain

Topology make_domain(const DomainParams& params) {
    const auto addr = [](uint16_t host) { return make_addr(0xfd00, host); };

    std::vector<SimNode> nodes;
    nodes.push_back(SimNode{"Alpha", addr(1), nullptr});

    const auto domain_node = [&](const std::string& name, uint32_t id,
                                 bool encap, bool left_ingress,
                                 bool right_egress) {
        SimNode node;
        node.name = name;
        node.address = addr(static_cast<uint16_t>(id + 1));
        if (!params.registered) {
            nodes.push_back(std::move(node));
            return;
        }
        NodeConfig cfg;
        cfg.ioam_node_id = id;
        cfg.address = node.address;
        cfg.interfaces.push_back(InterfaceConfig{
            "eth0", static_cast<uint16_t>(id * 10), left_ingress, left_ingress});
        cfg.interfaces.push_back(InterfaceConfig{
            "eth1", static_cast<uint16_t>(id * 10 + 1), right_egress, right_egress});
        const bool removes = name == "Aramis";
        for (uint32_t ns = 0; ns < params.namespaces; ++ns)
            cfg.namespaces.push_back(NamespaceConfig{
                static_cast<uint16_t>(params.first_namespace + ns), removes});
        if (encap) {
            for (uint32_t ns = 0; ns < params.namespaces; ++ns) {
                for (uint32_t k = 0; k < params.options_per_namespace; ++k) {
                    IoamTraceOption trace;
                    trace.variant = params.variant;
                    trace.namespace_id = static_cast<uint16_t>(params.first_namespace + ns);
                    trace.trace_type = params.trace_type;
                    trace.node_len =
                        static_cast<uint8_t>(node_data_len(params.trace_type) / 4);
                    if (params.variant == TraceVariant::PreAllocated)
                        trace.remaining_len = params.capacity;
                    EncapEntry entry;
                    entry.namespace_id = trace.namespace_id;
                    entry.egress_dev = "eth1";
                    entry.eh_kind = EhKind::HopByHop;
                    entry.option_template = trace;
                    cfg.encaps.push_back(std::move(entry));
                }
            }
        }
        node.ioam = register_node(cfg);
        nodes.push_back(std::move(node));
    };

    domain_node("Athos", 1, true, false, true);
    domain_node("Porthos", 2, false, true, true);
    domain_node("Aramis", 3, false, true, false);
    nodes.push_back(SimNode{"Beta", addr(5), nullptr});

    std::vector<Link> links{
        {{"Alpha", "eth1"}, {"Athos", "eth0"}, params.mtu},
        {{"Athos", "eth1"}, {"Porthos", "eth0"}, params.mtu},
        {{"Porthos", "eth1"}, {"Aramis", "eth0"}, params.mtu},
        {{"Aramis", "eth1"}, {"Beta", "eth0"}, params.mtu},
    };
    return Topology(std::move(nodes), std::move(links));
}

}  // namespace ioam
