"""
A Java lexer sufficient for bag-of-words vectorisation, and the pruning step
that keeps only the tokens of one test method.

The lexer recognises keywords, identifiers, numeric/string/char literals
(text blocks included), operators, separators and annotations. Comments and
whitespace are dropped. There is no generics disambiguation (``>>`` is one
operator) and no unicode escapes outside literals.
"""

import bisect
import enum
import logging
import re
from dataclasses import dataclass, field

import pandas as pd

from .errors import LexError, MethodNotFoundError, UnbalancedBracesError

logger = logging.getLogger(__name__)


class TokenKind(enum.Enum):
    KEYWORD = 'KEYWORD'
    IDENT = 'IDENT'
    INT_LIT = 'INT_LIT'
    FLOAT_LIT = 'FLOAT_LIT'
    STRING_LIT = 'STRING_LIT'
    CHAR_LIT = 'CHAR_LIT'
    OPERATOR = 'OPERATOR'
    SEPARATOR = 'SEPARATOR'
    ANNOTATION = 'ANNOTATION'


# true, false and null are literals in the JLS; they are reported as keywords
KEYWORDS = frozenset((
    'abstract', 'assert', 'boolean', 'break', 'byte', 'case', 'catch', 'char',
    'class', 'const', 'continue', 'default', 'do', 'double', 'else', 'enum',
    'extends', 'final', 'finally', 'float', 'for', 'goto', 'if', 'implements',
    'import', 'instanceof', 'int', 'interface', 'long', 'native', 'new',
    'package', 'private', 'protected', 'public', 'return', 'short', 'static',
    'strictfp', 'super', 'switch', 'synchronized', 'this', 'throw', 'throws',
    'transient', 'try', 'void', 'volatile', 'while', 'true', 'false', 'null',
))
TYPE_KEYWORDS = frozenset(('boolean', 'byte', 'char', 'double', 'float', 'int', 'long', 'short', 'void'))

OPERATORS = sorted((
    '>>>=', '<<=', '>>=', '>>>', '->', '++', '--', '&&', '||', '==', '!=',
    '<=', '>=', '+=', '-=', '*=', '/=', '&=', '|=', '^=', '%=', '<<', '>>',
    '=', '>', '<', '!', '~', '?', ':', '+', '-', '*', '/', '&', '|', '^', '%',
))
OPERATORS.sort(key=len, reverse=True)
SEPARATORS = ('...', '::', '(', ')', '{', '}', '[', ']', ';', ',', '.')

_IDENT = r'(?:[^\W\d]|\$)[\w$]*'
_EXP = r'[eE][+-]?\d[\d_]*'
_RE_IDENT = re.compile(_IDENT)
_RE_ANNOTATION = re.compile(r'@' + _IDENT + r'(?:\.' + _IDENT + r')*')
_RE_FLOAT = re.compile(
    r'(?:0[xX][0-9a-fA-F_]*\.?[0-9a-fA-F_]*[pP][+-]?\d+[fFdD]?'
    r'|\d[\d_]*\.(?!\.)[\d_]*(?:' + _EXP + r')?[fFdD]?'
    r'|\.\d[\d_]*(?:' + _EXP + r')?[fFdD]?'
    r'|\d[\d_]*' + _EXP + r'[fFdD]?'
    r'|\d[\d_]*[fFdD])'
)
_RE_INT = re.compile(r'(?:0[xX][0-9a-fA-F_]+|0[bB][01_]+|\d[\d_]*)[lL]?')
_RE_TEXT_BLOCK = re.compile(r'"""[ \t\f]*\r?\n(?:[^"\\]|\\.|"(?!""))*"""', re.DOTALL)
_RE_STRING = re.compile(r'"(?:[^"\\\n\r]|\\.)*"')
_RE_CHAR = re.compile(r"'(?:[^'\\\n\r]|\\.)+'")
_RE_SPACE = re.compile(r'[ \t\f\r\n]+')


@dataclass(frozen=True)
class Token:
    kind: TokenKind
    text: str
    line: int
    col: int


@dataclass
class TokenStream:
    """Ordered tokens of a file or of one extracted test method."""

    tokens: list = field(default_factory=list)
    origin: str = ''

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, idx):
        return self.tokens[idx]

    def texts(self):
        return [t.text for t in self.tokens]


def tokenize(source, origin=''):
    """
    Split Java source into tokens.

    :param source: Java source text
    :type source: str
    :param origin: test id recorded on the stream, defaults to ''
    :type origin: str, optional
    :raises LexError: on unterminated literals or block comments, or stray characters
    :return: the tokens in source order
    :rtype: TokenStream
    """
    line_starts = [0] + [m.end() for m in re.finditer('\n', source)]

    def position(offset):
        line = bisect.bisect_right(line_starts, offset)
        return line, offset - line_starts[line - 1] + 1

    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        m = _RE_SPACE.match(source, pos)
        if m:
            pos = m.end()
            continue

        if source.startswith('//', pos):
            end = source.find('\n', pos)
            pos = n if end < 0 else end
            continue
        if source.startswith('/*', pos):
            end = source.find('*/', pos + 2)
            if end < 0:
                raise LexError(*position(pos), 'unterminated block comment')
            pos = end + 2
            continue

        kind = None
        if ch == '"':
            m = _RE_TEXT_BLOCK.match(source, pos) if source.startswith('"""', pos) else _RE_STRING.match(source, pos)
            if not m:
                raise LexError(*position(pos), 'unterminated string literal')
            kind = TokenKind.STRING_LIT
        elif ch == "'":
            m = _RE_CHAR.match(source, pos)
            if not m:
                raise LexError(*position(pos), 'unterminated char literal')
            kind = TokenKind.CHAR_LIT
        elif ch == '@':
            m = _RE_ANNOTATION.match(source, pos)
            if not m:
                raise LexError(*position(pos), "expected annotation name after '@'")
            kind = TokenKind.ANNOTATION
        elif ch.isdigit() or (ch == '.' and source[pos + 1:pos + 2].isdigit()):
            m = _RE_FLOAT.match(source, pos)
            kind = TokenKind.FLOAT_LIT
            if not m:
                m = _RE_INT.match(source, pos)
                kind = TokenKind.INT_LIT
        else:
            m = _RE_IDENT.match(source, pos)
            if m:
                kind = TokenKind.KEYWORD if m.group() in KEYWORDS else TokenKind.IDENT

        if m is not None:
            text = m.group()
            end = m.end()
        else:
            text = _match_symbol(source, pos)
            if text is None:
                raise LexError(*position(pos), 'unexpected character {!r}'.format(ch))
            kind = TokenKind.SEPARATOR if text in SEPARATORS else TokenKind.OPERATOR
            end = pos + len(text)

        tokens.append(Token(kind, text, *position(pos)))
        pos = end

    return TokenStream(tokens, origin)


def _match_symbol(source, pos):
    for sym in SEPARATORS[:2]:
        if source.startswith(sym, pos):
            return sym
    for op in OPERATORS:
        if source.startswith(op, pos):
            return op
    if source[pos] in '(){}[];,.':
        return source[pos]
    return None


def extract_test_method(source, method_name, origin=''):
    """
    Keep only the tokens of one method: its annotations, modifiers and
    signature through the closing brace of its body. When the name is
    overloaded the first declaration in file order is used.

    :param source: Java source text of the test class file
    :type source: str
    :param method_name: simple name of the test method
    :type method_name: str
    :param origin: test id recorded on the stream, defaults to ''
    :type origin: str, optional
    :raises MethodNotFoundError: if no method body with that name is declared
    :raises UnbalancedBracesError: if the method body is not closed
    :return: the tokens of the method, a contiguous slice of :func:`tokenize`
    :rtype: TokenStream
    """
    if not _RE_IDENT.fullmatch(method_name) or method_name in KEYWORDS:
        raise ValueError('{!r} is not a simple identifier'.format(method_name))
    tokens = tokenize(source, origin).tokens

    declarations = [d for d in (_declaration_at(tokens, i, method_name) for i in range(len(tokens))) if d]
    if not declarations:
        raise MethodNotFoundError(method_name)
    if len(declarations) > 1:
        logger.warning('%s: %d declarations of %s(), using the first', origin or '<source>',
                       len(declarations), method_name)
    name_idx, body_idx = declarations[0]

    start = _header_start(tokens, name_idx)
    end = _matching(tokens, body_idx, '{', '}')
    if end is None:
        raise UnbalancedBracesError('body of {}() is not closed'.format(method_name))
    return TokenStream(tokens[start:end + 1], origin)


def flatten(stream):
    """
    Join the token texts with single spaces.

    :param stream: the tokens
    :type stream: TokenStream
    :return: the flattened test case
    :rtype: str
    """
    return ' '.join(t.text for t in stream)


def save_flattened(rows, path):
    """
    Write flattened test cases as CSV ``test_id,flattened_source``.

    :param rows: mapping test_id -> flattened source
    :type rows: dict
    :param path: output file
    :type path: str or Path
    """
    frame = pd.DataFrame({'test_id': list(rows.keys()), 'flattened_source': list(rows.values())})
    frame.to_csv(path, index=False)


def load_flattened(path):
    """
    Read the CSV written by :func:`save_flattened`.

    :param path: input file
    :type path: str or Path
    :return: mapping test_id -> flattened source, in file order
    :rtype: dict
    """
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    return dict(zip(frame['test_id'], frame['flattened_source']))


# ---------------------------------------------------------------------------- #
#                           Helpers for the pruning step                       #
# ---------------------------------------------------------------------------- #


def _is(tok, kind, text):
    return tok.kind is kind and tok.text == text


def _declaration_at(tokens, i, name):
    """Return (name index, body '{' index) if tokens[i] names a method declaration with a body."""
    tok = tokens[i]
    if tok.kind is not TokenKind.IDENT or tok.text != name or i == 0 or i + 1 >= len(tokens):
        return None
    if not _is(tokens[i + 1], TokenKind.SEPARATOR, '('):
        return None
    prev = tokens[i - 1]
    # a declaration is preceded by its return type
    if not (prev.kind is TokenKind.IDENT
            or (prev.kind is TokenKind.KEYWORD and prev.text in TYPE_KEYWORDS)
            or prev.text in ('>', ']', '>>', '>>>')):
        return None
    close = _matching(tokens, i + 1, '(', ')')
    if close is None:
        return None
    j = close + 1
    while j < len(tokens):
        t = tokens[j]
        if _is(t, TokenKind.SEPARATOR, '{'):
            return i, j
        if _is(t, TokenKind.SEPARATOR, ';'):
            return None
        if t.kind in (TokenKind.IDENT, TokenKind.ANNOTATION) or t.text in ('throws', '.', ',', '<', '>'):
            j += 1
            continue
        return None
    return None


def _header_start(tokens, name_idx):
    """Walk back over return type, modifiers and annotations to the end of the previous member."""
    depth = 0
    k = name_idx - 1
    while k >= 0:
        t = tokens[k]
        if t.kind is TokenKind.SEPARATOR:
            if t.text == ')':
                depth += 1
            elif t.text == '(':
                depth -= 1
            elif depth == 0 and t.text in (';', '{', '}'):
                break
        k -= 1
    return k + 1


def _matching(tokens, open_idx, open_text, close_text):
    depth = 0
    for j in range(open_idx, len(tokens)):
        t = tokens[j]
        if t.kind is not TokenKind.SEPARATOR:
            continue
        if t.text == open_text:
            depth += 1
        elif t.text == close_text:
            depth -= 1
            if depth == 0:
                return j
    return None
