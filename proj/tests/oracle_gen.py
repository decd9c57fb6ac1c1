#!/usr/bin/env python3
"""Regenerates the frozen numeric constants used by the C++ unit and
acceptance tests. Pure NumPy, independent of the C++ implementation.

Run from the repo root:  python3 tests/oracle_gen.py
Paste the printed values into the corresponding test files when they change.
"""
import numpy as np

np.set_printoptions(precision=17, floatmode="maxprec", suppress=False)


def fmt(x):
    return repr(float(x))


def softmax_rows(m):
    out = np.empty_like(m)
    for i in range(m.shape[0]):
        row = m[i]
        finite = np.isfinite(row)
        mx = row[finite].max()
        e = np.where(finite, np.exp(row - mx), 0.0)
        out[i] = e / e.sum()
    return out


def causal_mask(s):
    s = s.copy()
    n = s.shape[0]
    for i in range(n):
        for j in range(n):
            if j > i:
                s[i, j] = -np.inf
    return s


def attention_block(e, wq, wk, wv, wmh, h, masked):
    d_model = e.shape[1]
    dk = d_model // h
    q, k, v = e @ wq, e @ wk, e @ wv
    heads = []
    for i in range(h):
        sl = slice(i * dk, (i + 1) * dk)
        score = q[:, sl] @ k[:, sl].T / np.sqrt(dk)
        if masked:
            score = causal_mask(score)
        heads.append(softmax_rows(score) @ v[:, sl])
    return np.tanh(np.concatenate(heads, axis=1) @ wmh)


print("== softmax row [1,2,3] ==")
print(softmax_rows(np.array([[1.0, 2.0, 3.0]]))[0])

print("\n== tanh(1) ==")
print(fmt(np.tanh(1.0)))

print("\n== cosine (1,1)x(1,0) ==")
a, b = np.array([1.0, 1.0]), np.array([1.0, 0.0])
print(fmt(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))

print("\n== masked attention hand case: E=[[1,0,0,0],[0,1,0,0]], h=1, identity weights ==")
e = np.array([[1.0, 0, 0, 0], [0, 1.0, 0, 0]])
i4 = np.eye(4)
out = attention_block(e, i4, i4, i4, i4, 1, masked=True)
print(out)

print("\n== same input, unmasked ==")
print(attention_block(e, i4, i4, i4, i4, 1, masked=False))

print("\n== interaction hand case ==")
# teacher row u, text row v, fusion block identity weights, masked, then
# mean over the two positions, then W_HB selecting the first two columns.
u = np.array([[1.0, 0, 0, 0]])
v = np.array([[0, 1.0, 0, 0]])
cat = np.concatenate([u, v], axis=0)
att = attention_block(cat, i4, i4, i4, i4, 1, masked=True)
pooled = att.mean(axis=0, keepdims=True)
whb = np.zeros((4, 2))
whb[0, 0] = 1.0
whb[1, 1] = 1.0
print(pooled @ whb)

print("\n== one-vs-all loss, L=2, Y=(1,-1), positives={0} ==")
def sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))
y = np.array([1.0, 0.0])
Y = np.array([1.0, -1.0])
loss = -(y * np.log(sigmoid(Y)) + (1 - y) * np.log(1 - sigmoid(Y))).sum()
print(fmt(loss))
print("grad:", sigmoid(Y) - y)

print("\n== adam single step: theta0=0.5, g=1, lr=0.1, defaults ==")
lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
m = (1 - b1) * 1.0
vv = (1 - b2) * 1.0
mhat = m / (1 - b1)
vhat = vv / (1 - b2)
theta = 0.5 - lr * mhat / (np.sqrt(vhat) + eps)
print(fmt(theta))

print("\n== propensity: N=1000, A=0.55, B=1.5, N_l=10 ==")
N, A, B, Nl = 1000, 0.55, 1.5, 10
C = (np.log(N) - 1) * (B + 1) ** A
p = 1.0 / (1.0 + C * np.exp(-A * np.log(Nl + B)))
print(fmt(p))

print("\n== ndcg: truth {0,1}, ranking [2,0], k=2 ==")
dcg = 1.0 / np.log2(3.0)
idcg = 1.0 / np.log2(2.0) + 1.0 / np.log2(3.0)
print(fmt(dcg / idcg))

print("\n== mean of embeddings (1,0) and (1,2) ==")
print((np.array([[1.0, 0], [1.0, 2]])).mean(axis=0))
