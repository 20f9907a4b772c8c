#pragma once

#include <algorithm>
#include <cctype>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "secnosql/crypto.hpp"
#include "secnosql/errors.hpp"

namespace secnosql {

inline bool is_identifier(std::string_view s) {
    if (s.empty()) return false;
    if (!std::isalpha(static_cast<unsigned char>(s[0])) && s[0] != '_') return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
    });
}

// One table with a single partition-key column and string-valued cells.
struct SchemaDef {
    std::string table;
    std::string key_column;
    std::vector<std::string> value_columns;

    void validate() const {
        if (!is_identifier(table))
            throw SchemaError("invalid table name '" + table + "'");
        if (!is_identifier(key_column))
            throw SchemaError("invalid key column name '" + key_column + "'");
        for (const auto& c : value_columns) {
            if (!is_identifier(c))
                throw SchemaError("invalid column name '" + c + "'");
            if (c == key_column)
                throw SchemaError("key column '" + c + "' repeated as a value column");
        }
        for (size_t i = 0; i < value_columns.size(); ++i)
            for (size_t j = i + 1; j < value_columns.size(); ++j)
                if (value_columns[i] == value_columns[j])
                    throw SchemaError("duplicate column '" + value_columns[i] + "'");
    }

    bool has_value_column(std::string_view name) const {
        return std::find(value_columns.begin(), value_columns.end(), name) !=
               value_columns.end();
    }

    friend bool operator==(const SchemaDef&, const SchemaDef&) = default;
};

enum class QueryOp : uint8_t { CreateTable, Insert, Select, Update, Delete };

struct QueryAst {
    QueryOp op;
    std::string table;
    // Partition-key literal. For INSERT this is the first VALUES entry;
    // for SELECT/UPDATE/DELETE it comes from the WHERE clause.
    std::string key_value;
    // Column the key literal was bound to (WHERE column, or the first
    // INSERT column). Whether it actually names the partition key is a
    // schema question, checked at translation time.
    std::string where_column;
    std::vector<std::pair<std::string, std::string>> assignments;
    std::vector<std::string> projection;  // SELECT list; {"*"} before expansion
    std::vector<std::string> columns;     // CREATE TABLE column list, key first
};

struct EncryptedCommand {
    QueryOp op;
    std::string table_pseudonym;
    Ciphertext key_ct{Scheme::Det, {}};
    std::vector<std::pair<std::string, Ciphertext>> cells;  // pseudonym -> RND value
    std::vector<std::string> projection_pseudonyms;
};

namespace qp {

// Hand-rolled tokenizer/parser for the CQL-like subset. Keywords are
// case-insensitive; identifiers keep their case; string literals are
// single-quoted with '' as the escape.
enum class Tok : uint8_t { Ident, String, LParen, RParen, Comma, Eq, Star, Semi, End };

struct Token {
    Tok kind;
    std::string text;  // identifier (as written) or decoded literal
    size_t offset;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    Token next() {
        skip_ws();
        size_t at = pos_;
        if (pos_ >= src_.size()) return {Tok::End, "", at};
        char c = src_[pos_];
        switch (c) {
            case '(': ++pos_; return {Tok::LParen, "(", at};
            case ')': ++pos_; return {Tok::RParen, ")", at};
            case ',': ++pos_; return {Tok::Comma, ",", at};
            case '=': ++pos_; return {Tok::Eq, "=", at};
            case '*': ++pos_; return {Tok::Star, "*", at};
            case ';': ++pos_; return {Tok::Semi, ";", at};
            case '\'': return string_literal(at);
            default: break;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t start = pos_;
            while (pos_ < src_.size() &&
                   (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
                ++pos_;
            return {Tok::Ident, std::string(src_.substr(start, pos_ - start)), at};
        }
        throw ParseError("unexpected character", at);
    }

private:
    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_])))
            ++pos_;
    }

    Token string_literal(size_t at) {
        ++pos_;  // opening quote
        std::string out;
        while (true) {
            if (pos_ >= src_.size())
                throw ParseError("unterminated string literal", at);
            char c = src_[pos_++];
            if (c == '\'') {
                if (pos_ < src_.size() && src_[pos_] == '\'') {
                    out.push_back('\'');
                    ++pos_;
                    continue;
                }
                return {Tok::String, std::move(out), at};
            }
            out.push_back(c);
        }
    }

    std::string_view src_;
    size_t pos_ = 0;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) { advance(); }

    QueryAst statement() {
        QueryAst ast;
        std::string kw = keyword();
        if (kw == "CREATE") {
            expect_keyword("TABLE");
            ast = create_table();
        } else if (kw == "INSERT") {
            expect_keyword("INTO");
            ast = insert();
        } else if (kw == "SELECT") {
            ast = select();
        } else if (kw == "UPDATE") {
            ast = update();
        } else if (kw == "DELETE") {
            expect_keyword("FROM");
            ast = del();
        } else {
            throw ParseError("expected CREATE, INSERT, SELECT, UPDATE or DELETE", cur_.offset);
        }
        if (cur_.kind == Tok::Semi) advance();
        if (cur_.kind != Tok::End)
            throw ParseError("trailing input after statement", cur_.offset);
        return ast;
    }

private:
    void advance() { cur_ = lex_.next(); }

    std::string keyword() {
        if (cur_.kind != Tok::Ident)
            throw ParseError("expected a keyword", cur_.offset);
        std::string up = cur_.text;
        std::transform(up.begin(), up.end(), up.begin(),
                       [](unsigned char c) { return std::toupper(c); });
        advance();
        return up;
    }

    void expect_keyword(std::string_view kw) {
        size_t at = cur_.offset;
        if (keyword() != kw)
            throw ParseError("expected " + std::string(kw), at);
    }

    std::string identifier(const char* what) {
        if (cur_.kind != Tok::Ident)
            throw ParseError(std::string("expected ") + what, cur_.offset);
        std::string id = cur_.text;
        advance();
        return id;
    }

    std::string literal() {
        if (cur_.kind != Tok::String)
            throw ParseError("expected a quoted string literal", cur_.offset);
        std::string v = cur_.text;
        advance();
        return v;
    }

    void expect(Tok kind, const char* what) {
        if (cur_.kind != kind)
            throw ParseError(std::string("expected ") + what, cur_.offset);
        advance();
    }

    // WHERE <col> = '<literal>'; only single key-equality is grammatical.
    void where_clause(QueryAst& ast) {
        expect_keyword("WHERE");
        ast.where_column = identifier("a column name in WHERE");
        expect(Tok::Eq, "'='");
        ast.key_value = literal();
    }

    QueryAst create_table() {
        QueryAst ast;
        ast.op = QueryOp::CreateTable;
        ast.table = identifier("a table name");
        expect(Tok::LParen, "'('");
        ast.columns.push_back(identifier("a column name"));
        while (cur_.kind == Tok::Comma) {
            advance();
            ast.columns.push_back(identifier("a column name"));
        }
        expect(Tok::RParen, "')'");
        return ast;
    }

    QueryAst insert() {
        QueryAst ast;
        ast.op = QueryOp::Insert;
        ast.table = identifier("a table name");
        expect(Tok::LParen, "'('");
        std::vector<std::string> cols;
        cols.push_back(identifier("a column name"));
        while (cur_.kind == Tok::Comma) {
            advance();
            cols.push_back(identifier("a column name"));
        }
        expect(Tok::RParen, "')'");
        expect_keyword("VALUES");
        expect(Tok::LParen, "'('");
        std::vector<std::string> vals;
        vals.push_back(literal());
        while (cur_.kind == Tok::Comma) {
            advance();
            vals.push_back(literal());
        }
        expect(Tok::RParen, "')'");
        if (cols.size() != vals.size())
            throw ParseError("INSERT column and value counts differ", cur_.offset);
        // First column carries the partition key.
        ast.where_column = cols[0];
        ast.key_value = vals[0];
        for (size_t i = 1; i < cols.size(); ++i)
            ast.assignments.emplace_back(cols[i], vals[i]);
        return ast;
    }

    QueryAst select() {
        QueryAst ast;
        ast.op = QueryOp::Select;
        if (cur_.kind == Tok::Star) {
            advance();
            ast.projection.push_back("*");
        } else {
            ast.projection.push_back(identifier("a column name or '*'"));
            while (cur_.kind == Tok::Comma) {
                advance();
                ast.projection.push_back(identifier("a column name"));
            }
        }
        expect_keyword("FROM");
        ast.table = identifier("a table name");
        where_clause(ast);
        return ast;
    }

    QueryAst update() {
        QueryAst ast;
        ast.op = QueryOp::Update;
        ast.table = identifier("a table name");
        expect_keyword("SET");
        auto one = [&] {
            std::string col = identifier("a column name");
            expect(Tok::Eq, "'='");
            ast.assignments.emplace_back(col, literal());
        };
        one();
        while (cur_.kind == Tok::Comma) {
            advance();
            one();
        }
        where_clause(ast);
        return ast;
    }

    QueryAst del() {
        QueryAst ast;
        ast.op = QueryOp::Delete;
        ast.table = identifier("a table name");
        where_clause(ast);
        return ast;
    }

    Lexer lex_;
    Token cur_;
};

}  // namespace qp

inline QueryAst parse(std::string_view text) {
    if (text.empty())
        throw ParseError("empty query", 0);
    return qp::Parser(text).statement();
}

// Schema-resolved view of an AST: key literal bound to the real key column,
// '*' expanded, every referenced column verified. Shared by the encrypting
// and the plaintext execution paths.
struct ResolvedQuery {
    QueryOp op;
    std::string key_value;
    std::vector<std::pair<std::string, std::string>> assignments;
    std::vector<std::string> projection;  // value columns, expanded
};

inline ResolvedQuery resolve(const QueryAst& ast, const SchemaDef& schema) {
    if (ast.table != schema.table)
        throw SchemaError("unknown table '" + ast.table + "'");

    ResolvedQuery rq;
    rq.op = ast.op;
    rq.key_value = ast.key_value;

    if (ast.op == QueryOp::CreateTable) return rq;

    if (ast.op == QueryOp::Insert) {
        if (ast.where_column != schema.key_column)
            throw SchemaError("INSERT must list the partition key '" + schema.key_column +
                              "' first");
    } else if (ast.where_column != schema.key_column) {
        throw UnsupportedPredicateError(
            "only equality on the partition key '" + schema.key_column +
            "' is supported; got column '" + ast.where_column + "'");
    }

    for (const auto& [col, val] : ast.assignments) {
        if (col == schema.key_column)
            throw SchemaError("the partition key cannot be assigned");
        if (!schema.has_value_column(col))
            throw SchemaError("unknown column '" + col + "'");
        rq.assignments.emplace_back(col, val);
    }
    for (size_t i = 0; i < rq.assignments.size(); ++i)
        for (size_t j = i + 1; j < rq.assignments.size(); ++j)
            if (rq.assignments[i].first == rq.assignments[j].first)
                throw SchemaError("column '" + rq.assignments[i].first + "' assigned twice");

    if (ast.op == QueryOp::Select) {
        // '*' expands here so the store never sees projection semantics.
        if (ast.projection.size() == 1 && ast.projection[0] == "*") {
            rq.projection = schema.value_columns;
        } else {
            for (const auto& col : ast.projection) {
                if (!schema.has_value_column(col))
                    throw SchemaError("unknown column '" + col + "' in SELECT");
                rq.projection.push_back(col);
            }
        }
    }
    return rq;
}

// Pseudonym table for one schema, recomputable from the keys alone.
struct AnonymizedSchema {
    std::string table_pseudonym;
    std::map<std::string, std::string> column_to_pseudonym;
    std::map<std::string, std::string> pseudonym_to_column;

    AnonymizedSchema() = default;
    AnonymizedSchema(const SchemaDef& schema, const KeySet& keys) {
        table_pseudonym = anonymize_name(keys, NameKind::Table, schema.table);
        for (const auto& col : schema.value_columns) {
            std::string ps = anonymize_name(keys, NameKind::Column, col);
            column_to_pseudonym.emplace(col, ps);
            pseudonym_to_column.emplace(ps, col);
        }
    }
};

// Rewrites a plaintext query for the encrypted store: names are anonymized,
// the key is DET-encrypted so equality lookups work, cell values are
// RND-encrypted.
inline EncryptedCommand translate(const QueryAst& ast, const SchemaDef& schema,
                                  const KeySet& keys) {
    ResolvedQuery rq = resolve(ast, schema);
    AnonymizedSchema anon(schema, keys);

    EncryptedCommand cmd;
    cmd.op = ast.op;
    cmd.table_pseudonym = anon.table_pseudonym;
    if (ast.op == QueryOp::CreateTable) return cmd;

    cmd.key_ct = det_encrypt(keys, rq.key_value);
    for (const auto& [col, val] : rq.assignments)
        cmd.cells.emplace_back(anon.column_to_pseudonym.at(col), rnd_encrypt(keys, val));
    for (const auto& col : rq.projection)
        cmd.projection_pseudonyms.push_back(anon.column_to_pseudonym.at(col));
    return cmd;
}

// Inverse of the value side of translate: restores plaintext column names
// and decrypts cell values, preserving input order.
inline std::vector<std::pair<std::string, std::string>> decrypt_row(
    const std::vector<std::pair<std::string, Ciphertext>>& cells, const SchemaDef& schema,
    const KeySet& keys) {
    AnonymizedSchema anon(schema, keys);
    std::vector<std::pair<std::string, std::string>> out;
    out.reserve(cells.size());
    for (const auto& [pseudonym, ct] : cells) {
        auto it = anon.pseudonym_to_column.find(pseudonym);
        if (it == anon.pseudonym_to_column.end())
            throw SchemaError("cell pseudonym does not belong to table '" + schema.table + "'");
        Bytes plain = rnd_decrypt(keys, ct);
        out.emplace_back(it->second, to_string(plain));
    }
    return out;
}

}  // namespace secnosql
