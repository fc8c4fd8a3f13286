// Copyright (c) mvbc contributors.
// SPDX-License-Identifier: Apache-2.0
//
// Textual assembly format: line-based, one declaration or instruction per
// line, '#' starts a comment. This is the single canonical serialization;
// format_program() output always re-parses to a structurally equal program.

#include "mvbc/ir.hpp"

#include <cctype>
#include <charconv>
#include <sstream>

namespace mvbc {

namespace {

struct Token {
    enum class Kind {
        Ident, Number, Punct, HexLit, End,
    } kind = Kind::End;
    std::string text;
    uint32_t column = 0;
};

class LineLexer {
public:
    LineLexer(std::string_view line, uint32_t line_no) : line_(line), line_no_(line_no) {
        size_t hash = line_.find('#');
        if (hash != std::string_view::npos)
            line_ = line_.substr(0, hash);
        next();
    }

    const Token& peek() const { return tok_; }
    uint32_t line_no() const { return line_no_; }

    Token take() {
        Token t = tok_;
        next();
        return t;
    }

    bool at_end() const { return tok_.kind == Token::Kind::End; }

private:
    void next() {
        while (pos_ < line_.size() && std::isspace(static_cast<unsigned char>(line_[pos_])))
            ++pos_;
        tok_ = Token{};
        tok_.column = static_cast<uint32_t>(pos_ + 1);
        if (pos_ >= line_.size())
            return;
        char c = line_[pos_];
        if (c == '0' && pos_ + 1 < line_.size() && (line_[pos_ + 1] == 'x' || line_[pos_ + 1] == 'X')) {
            size_t start = pos_;
            pos_ += 2;
            while (pos_ < line_.size() && std::isxdigit(static_cast<unsigned char>(line_[pos_])))
                ++pos_;
            tok_.kind = Token::Kind::HexLit;
            tok_.text = std::string(line_.substr(start, pos_ - start));
            return;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '-' && pos_ + 1 < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_ + 1])))) {
            size_t start = pos_++;
            while (pos_ < line_.size() && std::isdigit(static_cast<unsigned char>(line_[pos_])))
                ++pos_;
            tok_.kind = Token::Kind::Number;
            tok_.text = std::string(line_.substr(start, pos_ - start));
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_++;
            while (pos_ < line_.size() &&
                   (std::isalnum(static_cast<unsigned char>(line_[pos_])) || line_[pos_] == '_'))
                ++pos_;
            tok_.kind = Token::Kind::Ident;
            tok_.text = std::string(line_.substr(start, pos_ - start));
            return;
        }
        // Punctuation, with two-char forms '::' and '->'.
        tok_.kind = Token::Kind::Punct;
        if (pos_ + 1 < line_.size()) {
            std::string_view two = line_.substr(pos_, 2);
            if (two == "::" || two == "->") {
                tok_.text = std::string(two);
                pos_ += 2;
                return;
            }
        }
        tok_.text = std::string(1, c);
        ++pos_;
    }

    std::string_view line_;
    uint32_t line_no_;
    size_t pos_ = 0;
    Token tok_;
};

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    ParseResult run() {
        std::vector<std::string_view> lines = split_lines(text_);
        for (uint32_t i = 0; i < lines.size(); ++i) {
            LineLexer lex(lines[i], i + 1);
            if (lex.at_end())
                continue;
            if (in_proc_)
                proc_line(lex);
            else
                decl_line(lex);
        }
        if (in_proc_)
            error(static_cast<uint32_t>(lines.size()), 1, "syntax", "unterminated proc body");
        ParseResult out;
        out.diagnostics = std::move(diags_);
        if (out.diagnostics.empty())
            out.program = std::move(program_);
        return out;
    }

private:
    static std::vector<std::string_view> split_lines(std::string_view text) {
        std::vector<std::string_view> lines;
        size_t start = 0;
        while (start <= text.size()) {
            size_t nl = text.find('\n', start);
            if (nl == std::string_view::npos) {
                lines.push_back(text.substr(start));
                break;
            }
            lines.push_back(text.substr(start, nl - start));
            start = nl + 1;
        }
        return lines;
    }

    void error(uint32_t line, uint32_t col, std::string kind, std::string msg) {
        Diagnostic d;
        d.kind = std::move(kind);
        d.message = std::move(msg);
        d.line = line;
        d.column = col;
        diags_.push_back(std::move(d));
    }

    bool expect_punct(LineLexer& lex, std::string_view p) {
        const Token& t = lex.peek();
        if (t.kind == Token::Kind::Punct && t.text == p) {
            lex.take();
            return true;
        }
        error(lex.line_no(), t.column, "syntax", "expected '" + std::string(p) + "'");
        return false;
    }

    std::optional<std::string> expect_ident(LineLexer& lex, const char* what) {
        const Token& t = lex.peek();
        if (t.kind == Token::Kind::Ident)
            return lex.take().text;
        error(lex.line_no(), t.column, "syntax", std::string("expected ") + what);
        return std::nullopt;
    }

    std::optional<uint64_t> expect_number(LineLexer& lex, const char* what) {
        const Token& t = lex.peek();
        if (t.kind == Token::Kind::Number && t.text[0] != '-') {
            uint64_t v = 0;
            auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
            if (ec == std::errc()) {
                lex.take();
                return v;
            }
        }
        error(lex.line_no(), t.column, "syntax", std::string("expected ") + what);
        return std::nullopt;
    }

    // An Ident or m::Ident; unqualified names resolve to the current module.
    std::optional<QualifiedName> qualified_name(LineLexer& lex, const char* what) {
        auto first = expect_ident(lex, what);
        if (!first)
            return std::nullopt;
        if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == "::") {
            lex.take();
            auto second = expect_ident(lex, what);
            if (!second)
                return std::nullopt;
            return QualifiedName{*first, *second};
        }
        return QualifiedName{current_module(), *first};
    }

    std::optional<ValType> parse_valtype(LineLexer& lex) {
        const Token& t = lex.peek();
        if (t.kind != Token::Kind::Ident) {
            error(lex.line_no(), t.column, "syntax", "expected type");
            return std::nullopt;
        }
        if (t.text == "bool") { lex.take(); return ValType::make_prim(PrimKind::Bool); }
        if (t.text == "int") { lex.take(); return ValType::make_prim(PrimKind::Int); }
        if (t.text == "addr") { lex.take(); return ValType::make_prim(PrimKind::Addr); }
        auto qn = qualified_name(lex, "type name");
        if (!qn)
            return std::nullopt;
        return ValType::make_record(*qn);
    }

    std::optional<Type> parse_type(LineLexer& lex) {
        if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == "&") {
            lex.take();
            bool is_mut = false;
            if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "mut") {
                lex.take();
                is_mut = true;
            }
            auto vt = parse_valtype(lex);
            if (!vt)
                return std::nullopt;
            return is_mut ? Type::make_mut_ref(*vt) : Type::make_imm_ref(*vt);
        }
        auto vt = parse_valtype(lex);
        if (!vt)
            return std::nullopt;
        return Type::make_val(*vt);
    }

    std::string current_module() const {
        return program_.modules.empty() ? std::string() : program_.modules.back().name;
    }

    void decl_line(LineLexer& lex) {
        const Token& t = lex.peek();
        if (t.kind != Token::Kind::Ident) {
            error(lex.line_no(), t.column, "syntax", "expected declaration");
            return;
        }
        if (t.text == "module") {
            lex.take();
            auto name = expect_ident(lex, "module name");
            if (!name)
                return;
            program_.modules.push_back(Module{*name, {}, {}});
            expect_line_end(lex);
            return;
        }
        if (program_.modules.empty()) {
            error(lex.line_no(), t.column, "syntax", "declaration before any 'module' header");
            return;
        }
        if (t.text == "record") {
            lex.take();
            record_decl(lex);
            return;
        }
        if (t.text == "proc") {
            lex.take();
            proc_header(lex);
            return;
        }
        error(lex.line_no(), t.column, "syntax", "unknown declaration '" + t.text + "'");
    }

    void record_decl(LineLexer& lex) {
        auto name = expect_ident(lex, "record name");
        if (!name || !expect_punct(lex, "{"))
            return;
        RecordDecl rec;
        rec.name = *name;
        if (!(lex.peek().kind == Token::Kind::Punct && lex.peek().text == "}")) {
            while (true) {
                auto fname = expect_ident(lex, "field name");
                if (!fname || !expect_punct(lex, ":"))
                    return;
                auto ftype = parse_valtype(lex);
                if (!ftype)
                    return;
                rec.fields.push_back(FieldDecl{*fname, *ftype});
                if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
                    lex.take();
                    continue;
                }
                break;
            }
        }
        if (!expect_punct(lex, "}"))
            return;
        expect_line_end(lex);
        program_.modules.back().records.push_back(std::move(rec));
    }

    std::optional<std::vector<Type>> type_list(LineLexer& lex) {
        if (!expect_punct(lex, "("))
            return std::nullopt;
        std::vector<Type> out;
        if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ")") {
            lex.take();
            return out;
        }
        while (true) {
            auto t = parse_type(lex);
            if (!t)
                return std::nullopt;
            out.push_back(*t);
            if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
                lex.take();
                continue;
            }
            break;
        }
        if (!expect_punct(lex, ")"))
            return std::nullopt;
        return out;
    }

    void proc_header(LineLexer& lex) {
        auto name = expect_ident(lex, "proc name");
        if (!name)
            return;
        auto ins = type_list(lex);
        if (!ins || !expect_punct(lex, "->"))
            return;
        auto outs = type_list(lex);
        if (!outs)
            return;
        if (!(lex.peek().kind == Token::Kind::Ident && lex.peek().text == "locals")) {
            error(lex.line_no(), lex.peek().column, "syntax", "expected 'locals'");
            return;
        }
        lex.take();
        auto n = expect_number(lex, "locals count");
        if (!n)
            return;
        Procedure proc;
        proc.name = *name;
        proc.module = current_module();
        proc.ins = std::move(*ins);
        proc.outs = std::move(*outs);
        proc.locals_count = static_cast<uint32_t>(*n);
        if (lex.peek().kind == Token::Kind::Ident && lex.peek().text == "acquires") {
            lex.take();
            while (true) {
                auto qn = qualified_name(lex, "record name");
                if (!qn)
                    return;
                proc.acquires.insert(*qn);
                if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
                    lex.take();
                    continue;
                }
                break;
            }
        }
        if (!expect_punct(lex, "{"))
            return;
        expect_line_end(lex);
        program_.modules.back().procs.push_back(std::move(proc));
        in_proc_ = true;
    }

    void proc_line(LineLexer& lex) {
        if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == "}") {
            lex.take();
            expect_line_end(lex);
            in_proc_ = false;
            return;
        }
        Procedure& proc = program_.modules.back().procs.back();
        auto off = expect_number(lex, "instruction offset");
        if (!off || !expect_punct(lex, ":"))
            return;
        if (*off != proc.code.size())
            error(lex.line_no(), 1, "bad offset",
                  "expected offset " + std::to_string(proc.code.size()) + ", found " + std::to_string(*off));
        auto instr = parse_instr(lex);
        if (!instr)
            return;
        expect_line_end(lex);
        proc.code.push_back(std::move(*instr));
    }

    std::optional<Instr> parse_instr(LineLexer& lex) {
        auto mnemonic = expect_ident(lex, "instruction mnemonic");
        if (!mnemonic)
            return std::nullopt;
        const std::string& m = *mnemonic;
        auto local_arg = [&](InstrKind k) -> std::optional<Instr> {
            auto x = expect_number(lex, "local index");
            if (!x)
                return std::nullopt;
            Instr i;
            i.kind = k;
            i.local = static_cast<uint32_t>(*x);
            return i;
        };
        auto record_arg = [&](InstrKind k) -> std::optional<Instr> {
            auto qn = qualified_name(lex, "record name");
            if (!qn)
                return std::nullopt;
            Instr i;
            i.kind = k;
            i.record = std::move(*qn);
            return i;
        };
        if (m == "MoveLoc") return local_arg(InstrKind::MoveLoc);
        if (m == "CopyLoc") return local_arg(InstrKind::CopyLoc);
        if (m == "StoreLoc") return local_arg(InstrKind::StoreLoc);
        if (m == "BorrowLoc") return local_arg(InstrKind::BorrowLoc);
        if (m == "BorrowField") {
            auto f = expect_ident(lex, "field name");
            if (!f)
                return std::nullopt;
            auto x = expect_number(lex, "local index");
            if (!x)
                return std::nullopt;
            return Instr::borrow_field(*f, static_cast<uint32_t>(*x));
        }
        if (m == "ReadRef") return Instr::read_ref();
        if (m == "WriteRef") return Instr::write_ref();
        if (m == "FreezeRef") return Instr::freeze_ref();
        if (m == "Pop") return Instr::pop();
        if (m == "Pack") return record_arg(InstrKind::Pack);
        if (m == "Unpack") return record_arg(InstrKind::Unpack);
        if (m == "MoveTo") return record_arg(InstrKind::MoveTo);
        if (m == "MoveFrom") return record_arg(InstrKind::MoveFrom);
        if (m == "BorrowGlobal") return record_arg(InstrKind::BorrowGlobal);
        if (m == "Ret") return Instr::ret();
        if (m == "Branch") {
            auto a = expect_number(lex, "branch target");
            if (!a)
                return std::nullopt;
            auto b = expect_number(lex, "branch target");
            if (!b)
                return std::nullopt;
            return Instr::branch(static_cast<uint32_t>(*a), static_cast<uint32_t>(*b));
        }
        if (m == "Call") {
            auto qn = qualified_name(lex, "proc name");
            if (!qn)
                return std::nullopt;
            return Instr::call(std::move(*qn));
        }
        if (m == "LdConst") return parse_ldconst(lex);
        if (m == "Op") return parse_op(lex);
        error(lex.line_no(), 1, "unknown mnemonic", "'" + m + "'");
        return std::nullopt;
    }

    std::optional<Instr> parse_ldconst(LineLexer& lex) {
        const Token& t = lex.peek();
        if (t.kind == Token::Kind::Ident && (t.text == "true" || t.text == "false")) {
            bool v = t.text == "true";
            lex.take();
            return Instr::ld_const(ConstVal::of_bool(v));
        }
        if (t.kind == Token::Kind::Number) {
            int64_t v = 0;
            auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
            if (ec != std::errc()) {
                error(lex.line_no(), t.column, "lexical error", "integer literal out of range");
                return std::nullopt;
            }
            lex.take();
            return Instr::ld_const(ConstVal::of_int(v));
        }
        if (t.kind == Token::Kind::HexLit) {
            auto a = Addr::from_hex(t.text);
            if (!a) {
                error(lex.line_no(), t.column, "lexical error", "bad address literal");
                return std::nullopt;
            }
            lex.take();
            return Instr::ld_const(ConstVal::of_addr(*a));
        }
        error(lex.line_no(), t.column, "syntax", "expected constant");
        return std::nullopt;
    }

    std::optional<Instr> parse_op(LineLexer& lex) {
        auto name = expect_ident(lex, "opcode name");
        if (!name || !expect_punct(lex, "("))
            return std::nullopt;
        OpSig sig;
        if (!(lex.peek().kind == Token::Kind::Punct && lex.peek().text == ")")) {
            while (true) {
                auto vt = parse_valtype(lex);
                if (!vt)
                    return std::nullopt;
                if (vt->kind != ValType::Kind::Prim) {
                    error(lex.line_no(), 1, "syntax", "Op operands must be primitive types");
                    return std::nullopt;
                }
                sig.operands.push_back(vt->prim);
                if (lex.peek().kind == Token::Kind::Punct && lex.peek().text == ",") {
                    lex.take();
                    continue;
                }
                break;
            }
        }
        if (!expect_punct(lex, ")") || !expect_punct(lex, "->"))
            return std::nullopt;
        auto rt = parse_valtype(lex);
        if (!rt)
            return std::nullopt;
        if (rt->kind != ValType::Kind::Prim) {
            error(lex.line_no(), 1, "syntax", "Op result must be a primitive type");
            return std::nullopt;
        }
        sig.result = rt->prim;
        auto code = op_from_name_sig(*name, sig);
        if (!code) {
            error(lex.line_no(), 1, "unknown opcode", "'" + *name + "' with that signature");
            return std::nullopt;
        }
        return Instr::oper(*code);
    }

    void expect_line_end(LineLexer& lex) {
        if (!lex.at_end())
            error(lex.line_no(), lex.peek().column, "syntax",
                  "unexpected trailing '" + lex.peek().text + "'");
    }

    std::string_view text_;
    Program program_;
    std::vector<Diagnostic> diags_;
    bool in_proc_ = false;
};

// Record and proc references print unqualified inside their own module.
std::string local_name(const QualifiedName& qn, const std::string& module) {
    return qn.module == module ? qn.name : qn.str();
}

std::string format_type(const Type& t, const std::string& module) {
    std::string inner = t.val.is_record() ? local_name(t.val.record, module) : valtype_str(t.val);
    switch (t.kind) {
    case Type::Kind::Val: return inner;
    case Type::Kind::ImmRef: return "&" + inner;
    case Type::Kind::MutRef: return "&mut " + inner;
    }
    return inner;
}

std::string format_instr(const Instr& in, const std::string& module) {
    switch (in.kind) {
    case InstrKind::Pack:
    case InstrKind::Unpack:
    case InstrKind::MoveTo:
    case InstrKind::MoveFrom:
    case InstrKind::BorrowGlobal:
        return std::string(instr_mnemonic(in.kind)) + " " + local_name(in.record, module);
    case InstrKind::Call:
        return std::string(instr_mnemonic(in.kind)) + " " + local_name(in.callee, module);
    default:
        return instr_str(in);
    }
}

} // namespace

ParseResult parse_program(std::string_view text) {
    return Parser(text).run();
}

std::string format_program(const Program& p) {
    std::ostringstream os;
    bool first_module = true;
    for (const auto& m : p.modules) {
        if (!first_module)
            os << "\n";
        first_module = false;
        os << "module " << m.name << "\n";
        for (const auto& r : m.records) {
            os << "\nrecord " << r.name << " {";
            for (size_t i = 0; i < r.fields.size(); ++i) {
                os << (i ? ", " : " ") << r.fields[i].name << ": ";
                const ValType& vt = r.fields[i].type;
                os << (vt.is_record() ? local_name(vt.record, m.name) : valtype_str(vt));
            }
            os << " }\n";
        }
        for (const auto& proc : m.procs) {
            os << "\nproc " << proc.name << "(";
            for (size_t i = 0; i < proc.ins.size(); ++i) {
                if (i) os << ", ";
                os << format_type(proc.ins[i], m.name);
            }
            os << ") -> (";
            for (size_t i = 0; i < proc.outs.size(); ++i) {
                if (i) os << ", ";
                os << format_type(proc.outs[i], m.name);
            }
            os << ") locals " << proc.locals_count;
            if (!proc.acquires.empty()) {
                os << " acquires ";
                bool first = true;
                for (const auto& qn : proc.acquires) {
                    if (!first) os << ", ";
                    first = false;
                    os << local_name(qn, m.name);
                }
            }
            os << " {\n";
            for (uint32_t off = 0; off < proc.code.size(); ++off)
                os << "  " << off << ": " << format_instr(proc.code[off], m.name) << "\n";
            os << "}\n";
        }
    }
    return os.str();
}

} // namespace mvbc
