#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "nanoua/vm.hpp"

// Assembler and disassembler for stream-processor programs.
//
// Source grammar, line oriented:
//
//   ; comment to end of line
//   label:                        (may share a line with an instruction)
//   .entry <serviceTypeId> <label>
//   mnemonic[.suffix] operand, operand
//
// Operands: streams s0..s15 (with .r/.w cursor qualifiers for mkidx/seek),
// index registers i0..i7, the counter register ctr, immediates #N (decimal,
// 0x hex, or negative), and label references for br/brc/call targets.
// Type suffixes: bool i8 u8 i16 u16 i32 u32 f32 f64 str nid lt qn var bs dv
// (bool is an alias for u8). Branch suffixes: eq ne lt le gt ge cnz cz.
namespace nanoua::uasm {

struct AsmError {
    int line;  // 1-based; 0 for file-level errors
    std::string message;
};

struct AsmResult {
    std::optional<vm::VmProgram> program;  // set only when errors is empty
    std::vector<AsmError> errors;
    bool ok() const { return errors.empty(); }
};

AsmResult assemble(std::string_view source, std::string program_name = "");

struct DisasmResult {
    std::string text;   // re-assemblable source
    std::string error;  // non-empty when the code does not decode cleanly
    bool ok() const { return error.empty(); }
};

DisasmResult disassemble(const vm::VmProgram& p);

}  // namespace nanoua::uasm
