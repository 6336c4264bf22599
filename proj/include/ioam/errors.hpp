#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ioam {

enum class Errc {
    // wire parsing
    too_short,
    not_ipv6,
    length_mismatch,
    truncated_eh,
    eh_chain_too_long,
    option_overrun,
    malformed_option,
    malformed_eh,
    inconsistent_node_len,
    unsupported_trace_bit,
    option_too_long,
    bad_pad_len,
    alignment_violation,
    parse_error,
    // registration
    too_many_namespaces,
    too_many_interfaces,
    duplicate_interface,
    duplicate_namespace,
    encap_not_egress_role,
    encap_unknown_interface,
    option_kind_mismatch,
    no_encap_for_interface,
    // datapath
    bad_ioam_size,
    context_already_attached,
    mtu_exceeded,
    // simulation / cli
    bad_topology,
    no_path,
    bad_params,
    io_error,
};

const char* errc_name(Errc code);

// Single exception type for the whole library; `offset` is the octet
// position the error refers to (npos when not applicable).
class Error : public std::runtime_error {
public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    Error(Errc code, const std::string& what, std::size_t offset = npos);

    Errc code() const { return code_; }
    std::size_t offset() const { return offset_; }

private:
    Errc code_;
    std::size_t offset_;
};

[[noreturn]] void fail(Errc code, const std::string& what,
                       std::size_t offset = Error::npos);

}  // namespace ioam
