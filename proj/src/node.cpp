#include "ioam/node.hpp"

#include <algorithm>

#include "ioam/bytes.hpp"

namespace ioam {

void NamespaceTable::insert(const NamespaceConfig& ns) {
    buckets_[bucket_of(ns.namespace_id)].push_back(ns);
}

const NamespaceConfig* NamespaceTable::find(uint16_t namespace_id) const {
    for (const NamespaceConfig& ns : buckets_[bucket_of(namespace_id)])
        if (ns.namespace_id == namespace_id) return &ns;
    return nullptr;
}

const InterfaceConfig* RegisteredNode::find_interface(std::string_view dev) const {
    for (const InterfaceConfig& ifc : interfaces_)
        if (ifc.dev_name == dev) return &ifc;
    return nullptr;
}

std::span<const uint8_t> RegisteredNode::padding(uint32_t len) const {
    if (len < 1 || len > 7)
        fail(Errc::bad_pad_len, "no pre-encoded padding of length " +
                                    std::to_string(len));
    return paddings_[len - 1];
}

const EncapBuffer* RegisteredNode::encap_buffer(std::string_view dev,
                                                EhKind kind) const {
    for (const EncapInterface& eif : encap_interfaces_)
        if (eif.dev == dev) return &eif.buffers[static_cast<std::size_t>(kind)];
    return nullptr;
}

namespace {

std::vector<uint8_t> encode_template(const OptionTemplate& tmpl,
                                     const OptionCodes& codes) {
    if (const auto* trace = std::get_if<IoamTraceOption>(&tmpl)) {
        if (trace->variant == TraceVariant::Incremental && trace->node_data.empty()) {
            // prebuild with one slot so the encap node can write its own
            // entry without growing the fresh packet
            IoamTraceOption with_slot = *trace;
            with_slot.node_data.emplace_back();
            return encode_trace_option(with_slot, codes);
        }
        return encode_trace_option(*trace, codes);
    }
    if (const auto* e2e = std::get_if<IoamE2EOption>(&tmpl))
        return encode_e2e_option(*e2e, codes);
    return encode_pot_option(std::get<IoamPotOption>(tmpl), codes);
}

TemplateSlot make_slot(const OptionTemplate& tmpl, uint16_t namespace_id,
                       uint32_t offset, uint32_t size) {
    TemplateSlot slot;
    slot.offset = offset;
    slot.size = size;
    slot.namespace_id = namespace_id;
    if (const auto* trace = std::get_if<IoamTraceOption>(&tmpl)) {
        slot.kind = TemplateSlot::Kind::Trace;
        slot.variant = trace->variant;
        slot.node_len = trace->node_len;
        slot.trace_type = trace->trace_type;
    } else if (const auto* e2e = std::get_if<IoamE2EOption>(&tmpl)) {
        slot.kind = TemplateSlot::Kind::E2E;
        slot.e2e_has_seq = (e2e->e2e_type & kE2eSeqNum) != 0;
    } else {
        slot.kind = TemplateSlot::Kind::Pot;
    }
    return slot;
}

}  // namespace

EncapBuffer EncapBuffer::build(const std::vector<const EncapEntry*>& entries,
                               const OptionCodes& codes) {
    EncapBuffer buf;
    if (entries.empty()) return buf;

    std::vector<uint8_t>& img = buf.image_;
    img.assign(2, 0);  // next-header placeholder + ext-len
    {
        const auto pad = encode_padding(2);
        img.insert(img.end(), pad.begin(), pad.end());
    }
    for (const EncapEntry* entry : entries) {
        const uint32_t head =
            head_padding(static_cast<uint32_t>(img.size()), 4, 0);
        if (head) {
            const auto pad = encode_padding(head);
            img.insert(img.end(), pad.begin(), pad.end());
        }
        const auto enc = encode_template(entry->option_template, codes);
        buf.slots_.push_back(make_slot(entry->option_template, entry->namespace_id,
                                       static_cast<uint32_t>(img.size()),
                                       static_cast<uint32_t>(enc.size())));
        img.insert(img.end(), enc.begin(), enc.end());
    }
    const uint32_t options_end = static_cast<uint32_t>(img.size());
    const uint32_t tail = head_padding(options_end, 8, 0);
    if (tail) {
        const auto pad = encode_padding(tail);
        img.insert(img.end(), pad.begin(), pad.end());
    }
    if (img.size() > 2048)
        fail(Errc::option_too_long,
             "encap option set of " + std::to_string(img.size()) +
                 " octets exceeds the EH size bound");
    img[1] = static_cast<uint8_t>(img.size() / 8 - 1);

    // Insert unit: options region rounded up to a 4-octet multiple, used
    // for appending into an existing EH of the same kind.
    buf.unit_.assign(img.begin() + EncapBuffer::kOptionsOffset,
                     img.begin() + options_end);
    const uint32_t round = head_padding(static_cast<uint32_t>(buf.unit_.size()), 4, 0);
    if (round) {
        const auto pad = encode_padding(round);
        buf.unit_.insert(buf.unit_.end(), pad.begin(), pad.end());
    }
    return buf;
}

uint32_t template_size(const OptionTemplate& tmpl) {
    return static_cast<uint32_t>(encode_template(tmpl, kDefaultCodes).size());
}

std::shared_ptr<const RegisteredNode> register_node(const NodeConfig& cfg) {
    if (cfg.interfaces.size() > kMaxInterfaces)
        fail(Errc::too_many_interfaces, std::to_string(cfg.interfaces.size()) +
                                            " interfaces, bound is " +
                                            std::to_string(kMaxInterfaces));
    if (cfg.namespaces.size() > kMaxNamespaces)
        fail(Errc::too_many_namespaces, std::to_string(cfg.namespaces.size()) +
                                            " namespaces, bound is " +
                                            std::to_string(kMaxNamespaces));
    if (cfg.encaps.size() > kMaxNamespaces)
        fail(Errc::too_many_namespaces, "more encap entries than the namespace bound");

    for (std::size_t i = 0; i < cfg.interfaces.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.interfaces.size(); ++j) {
            if (cfg.interfaces[i].dev_name == cfg.interfaces[j].dev_name)
                fail(Errc::duplicate_interface,
                     "device " + cfg.interfaces[i].dev_name + " appears twice");
            if (cfg.interfaces[i].ioam_if_id == cfg.interfaces[j].ioam_if_id)
                fail(Errc::duplicate_interface,
                     "interface id " + std::to_string(cfg.interfaces[i].ioam_if_id) +
                         " appears twice");
        }
    for (std::size_t i = 0; i < cfg.namespaces.size(); ++i)
        for (std::size_t j = i + 1; j < cfg.namespaces.size(); ++j)
            if (cfg.namespaces[i].namespace_id == cfg.namespaces[j].namespace_id)
                fail(Errc::duplicate_namespace,
                     "namespace " + std::to_string(cfg.namespaces[i].namespace_id) +
                         " appears twice");

    auto node = std::make_shared<RegisteredNode>();
    node->node_id_ = cfg.ioam_node_id;
    node->interfaces_ = cfg.interfaces;
    node->address_ = cfg.address;
    node->codes_ = cfg.codes;
    for (const NamespaceConfig& ns : cfg.namespaces) node->ns_table_.insert(ns);
    for (uint32_t len = 1; len <= 7; ++len)
        node->paddings_[len - 1] = encode_padding(len);

    for (const EncapEntry& entry : cfg.encaps) {
        const InterfaceConfig* ifc = node->find_interface(entry.egress_dev);
        if (!ifc)
            fail(Errc::encap_unknown_interface,
                 "encap names unregistered device " + entry.egress_dev);
        if (!ifc->egress)
            fail(Errc::encap_not_egress_role,
                 "device " + entry.egress_dev + " lacks the egress role");
        const bool is_e2e = std::holds_alternative<IoamE2EOption>(entry.option_template);
        if (is_e2e != (entry.eh_kind == EhKind::Destination))
            fail(Errc::option_kind_mismatch,
                 is_e2e ? "e2e options belong in a destination EH"
                        : "trace and pot options belong in a hop-by-hop EH");
    }

    // Two buffer slots per encap interface, one per EH kind.
    for (const EncapEntry& entry : cfg.encaps) {
        if (std::none_of(node->encap_interfaces_.begin(), node->encap_interfaces_.end(),
                         [&](const EncapInterface& e) { return e.dev == entry.egress_dev; }))
            node->encap_interfaces_.push_back(EncapInterface{entry.egress_dev, {}});
    }
    for (EncapInterface& eif : node->encap_interfaces_) {
        for (EhKind kind : {EhKind::HopByHop, EhKind::Destination}) {
            std::vector<const EncapEntry*> entries;
            for (const EncapEntry& entry : cfg.encaps)
                if (entry.egress_dev == eif.dev && entry.eh_kind == kind)
                    entries.push_back(&entry);
            eif.buffers[static_cast<std::size_t>(kind)] =
                EncapBuffer::build(entries, node->codes_);
        }
    }
    return node;
}

const NamespaceConfig* lookup_namespace(const RegisteredNode& node,
                                        uint16_t namespace_id) {
    return node.namespace_table().find(namespace_id);
}

std::vector<uint8_t> build_encap_buffer(const RegisteredNode& node,
                                        std::string_view dev, EhKind kind) {
    const EncapBuffer* buf = node.encap_buffer(dev, kind);
    if (!buf || buf->empty())
        fail(Errc::no_encap_for_interface,
             "no " + std::string(eh_kind_name(kind)) + " encap configured for " +
                 std::string(dev));
    const auto img = buf->image();
    return {img.begin(), img.end()};
}

}  // namespace ioam
