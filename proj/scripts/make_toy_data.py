#!/usr/bin/env python3
"""Writes the bundled toy legal data under data/toy. Output is deterministic."""

import json
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data" / "toy"

CRIMES = [
    ("盗窃罪", "盗窃公私财物，数额较大的，或者多次盗窃、入户盗窃、携带凶器盗窃、扒窃的", 264, 3),
    ("诈骗罪", "诈骗公私财物，数额较大的", 266, 3),
    ("抢劫罪", "以暴力、胁迫或者其他方法抢劫公私财物的", 263, 10),
    ("故意伤害罪", "故意伤害他人身体的", 234, 3),
    ("交通肇事罪", "违反交通运输管理法规，因而发生重大事故，致人重伤、死亡或者使公私财产遭受重大损失的", 133, 3),
    ("危险驾驶罪", "在道路上醉酒驾驶机动车的", 133, 1),
    ("职务侵占罪", "公司、企业或者其他单位的工作人员，利用职务上的便利，将本单位财物非法占为己有，数额较大的", 271, 3),
    ("敲诈勒索罪", "敲诈勒索公私财物，数额较大或者多次敲诈勒索的", 274, 3),
    ("故意毁坏财物罪", "故意毁坏公私财物，数额较大或者有其他严重情节的", 275, 3),
    ("寻衅滋事罪", "随意殴打他人，情节恶劣的", 293, 5),
    ("非法拘禁罪", "非法拘禁他人或者以其他方法非法剥夺他人人身自由的", 238, 3),
    ("挪用资金罪", "公司、企业或者其他单位的工作人员，利用职务上的便利，挪用本单位资金归个人使用或者借贷给他人的", 272, 3),
]

CITIES = ["北京市", "上海市", "广州市", "深圳市", "杭州市", "南京市", "成都市", "武汉市", "西安市", "重庆市"]
SURNAMES = ["张", "王", "李", "赵", "刘", "陈", "杨", "黄", "周", "吴"]
ITEMS = ["手机", "电动车", "笔记本电脑", "现金", "金项链", "自行车", "监控设备", "货物"]
CIVIL = [
    ("借款合同", "借款人应当按照约定的期限返还借款"),
    ("买卖合同", "出卖人应当履行向买受人交付标的物或者交付提取标的物的单证"),
    ("租赁合同", "承租人应当按照约定的期限支付租金"),
    ("劳动合同", "用人单位应当按照劳动合同约定和国家规定，向劳动者及时足额支付劳动报酬"),
    ("离婚纠纷", "夫妻双方自愿离婚的，应当签订书面离婚协议"),
    ("继承纠纷", "继承开始后，按照法定继承办理；有遗嘱的，按照遗嘱继承或者遗赠办理"),
]


def person(rng):
    return rng.choice(SURNAMES) + "某" + rng.choice(["", "甲", "乙", "丙"])


def article_doc(rng):
    name, facts, art, years = rng.choice(CRIMES)
    return (
        f"刑法第{art}条规定：{facts}，处{years}年以下有期徒刑、拘役或者管制，并处或者单处罚金。"
        f"本条所称{name}的认定，应当结合行为人的主观故意和客观行为综合判断。"
    )


def case_doc(rng):
    name, facts, art, years = rng.choice(CRIMES)
    who = person(rng)
    city = rng.choice(CITIES)
    item = rng.choice(ITEMS)
    month = rng.randint(1, 12)
    day = rng.randint(1, 28)
    value = rng.randint(2, 300) * 100
    term = rng.randint(6, 12 * years)
    return (
        f"{city}人民法院经审理查明：2019年{month}月{day}日，被告人{who}在{city}某小区内"
        f"窃取被害人{person(rng)}的{item}一部，价值人民币{value}元。"
        f"法院认为，被告人{who}的行为已构成{name}，依照《中华人民共和国刑法》第{art}条之规定，"
        f"判处有期徒刑{term}个月，并处罚金人民币{value // 10}元。"
    )


def civil_doc(rng):
    kind, rule = rng.choice(CIVIL)
    a, b = person(rng), person(rng)
    amount = rng.randint(1, 90) * 1000
    return (
        f"关于{kind}：{rule}。原告{a}与被告{b}因{kind}发生争议，涉案金额为{amount}元。"
        f"法院认为，当事人应当按照约定全面履行自己的义务，遂判决被告于判决生效之日起十日内支付原告{amount}元。"
        f"Case No. {rng.randint(1000, 9999)}-{rng.choice(['civil', 'appeal'])}."
    )


def make_corpus(rng, target_bytes):
    docs = []
    size = 0
    makers = [article_doc, case_doc, civil_doc]
    while size < target_bytes:
        parts = [rng.choice(makers)(rng) for _ in range(rng.randint(2, 5))]
        doc = "".join(parts)
        docs.append(doc)
        size += len(doc.encode("utf-8")) + 1
    return docs


# The 32 instruction records that make up the toy fine-tuning set, split
# across the three sources; subset (c) arrives as teacher responses.
SUBSET_A = [
    ("盗窃罪怎么判刑？", "处三年以下有期徒刑。"),
    ("诈骗罪的立案标准是什么？", "数额较大的应当立案。"),
    ("醉酒驾驶会被判刑吗？", "构成危险驾驶罪，处拘役。"),
    ("打人致轻伤要坐牢吗？", "构成故意伤害罪，可能被判刑。"),
    ("交通肇事逃逸怎么处理？", "处三年以上七年以下有期徒刑。"),
    ("抢劫罪最低判几年？", "处三年以上十年以下有期徒刑。"),
    ("挪用公司资金算犯罪吗？", "可能构成挪用资金罪。"),
    ("敲诈勒索多少钱立案？", "数额较大的即可立案。"),
    ("故意砸坏别人的车怎么办？", "可能构成故意毁坏财物罪。"),
    ("非法拘禁他人怎么处罚？", "处三年以下有期徒刑或者拘役。"),
    ("公司员工侵占财物怎么定罪？", "构成职务侵占罪。"),
    ("请问我向借钱人要钱多次未果，向法院起诉，法院多久才立案", "起诉的当日 ，法院就会立案的。"),
]

SUBSET_B = [
    ("寻衅滋事罪怎么判？", "处五年以下有期徒刑。"),
    ("借款合同的诉讼时效是多久？", "诉讼时效期间为三年。"),
    ("离婚协议需要什么形式？", "应当签订书面离婚协议。"),
    ("遗嘱继承优先于法定继承吗？", "有遗嘱的，按照遗嘱继承。"),
    ("拖欠工资可以去哪里投诉？", "可以向劳动监察部门投诉。"),
    ("租金逾期不付怎么办？", "出租人可以解除合同。"),
    ("买卖合同中出卖人有什么义务？", "交付标的物并转移所有权。"),
    ("未签劳动合同能要求双倍工资吗？", "可以要求支付二倍工资。"),
    ("刑事案件的追诉期限是多久？", "根据法定最高刑确定。"),
    ("正当防卫需要承担责任吗？", "不负刑事责任。"),
    ("未成年人犯罪会从轻处罚吗？", "应当从轻或者减轻处罚。"),
    ("自首可以减轻处罚吗？", "可以从轻或者减轻处罚。"),
]

SUBSET_C = [
    ("请问被骗了钱应该怎么办？", "应当及时向公安机关报案。"),
    ("请问房东不退押金怎么办？", "可以向法院提起诉讼。"),
    ("请问合同违约需要赔偿吗？", "违约方应当承担赔偿责任。"),
    ("请问醉驾的处罚标准是什么？", "处拘役，并处罚金。"),
    ("请问盗窃金额多少算数额较大？", "一般为一千元至三千元以上。"),
    ("请问民间借贷利息有上限吗？", "超过法定上限的部分不予支持。"),
    ("请问交通事故责任如何认定？", "由交警部门出具责任认定书。"),
    ("请问被公司辞退有补偿吗？", "用人单位应当支付经济补偿。"),
]


def task_items(rng):
    """Eight task fixtures. Some items reuse training instructions so a model
    overfit on the toy set scores above zero."""
    tasks = {}

    metrics = {1: "exact_match", 2: "exact_match", 3: "exact_match", 4: "numeric",
               5: "numeric", 6: "choice", 7: "numeric", 8: "exact_match"}

    def add(task, instruction, reference):
        item = {"task": task, "instruction": instruction, "reference": reference, "metric": metrics[task]}
        tasks.setdefault(task, []).append(item)

    for name, facts, art, _ in CRIMES[:10]:
        add(1, f"根据下列事实预测相关法条：行为人{facts}。", f"第{art}条")
        add(2, f"某人{facts}，应当适用刑法哪一条？", f"第{art}条")
        add(3, f"被告人{facts}，请预测其罪名。", name)
    for i in range(10):
        name, facts, art, years = CRIMES[i]
        months = rng.randint(6, 12 * years)
        add(4, f"被告人{facts}，请预测刑期（月）。", f"{months}")
        add(5, f"依据刑法第{art}条，被告人{facts}，请预测刑期（月）。", f"{months}")
    options = ["A", "B", "C", "D"]
    for i in range(10):
        picks = sorted(rng.sample(options, rng.randint(1, 2)))
        add(6, f"案例分析第{i + 1}题：下列哪些选项正确？(A) 甲 (B) 乙 (C) 丙 (D) 丁", ",".join(picks))
    for i in range(9):
        price = rng.randint(10, 400) * 100
        add(7, f"被告人毁坏监控设备，布线款为{price}元，请计算损失金额。", f"{price}")
    add(7, "监控布线款为15600元，请计算损失金额。", "15600")
    for instruction, output in SUBSET_A[:5] + SUBSET_B[:5]:
        add(8, instruction, output)
    return tasks


def dump_jsonl(path, rows):
    with open(path, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False) + "\n")


def main():
    rng = random.Random(20240607)
    ROOT.mkdir(parents=True, exist_ok=True)
    (ROOT / "tasks").mkdir(exist_ok=True)

    corpus = make_corpus(rng, 200_000)
    with open(ROOT / "corpus.txt", "w", encoding="utf-8") as f:
        for doc in corpus:
            f.write(doc + "\n")

    a = [{"instruction": i, "output": o, "subset": "a"} for i, o in SUBSET_A]
    a.append(a[0])  # duplicate, removed by the builder
    b = [{"instruction": i, "output": o, "subset": "b"} for i, o in SUBSET_B]
    b.append({"instruction": "空白回答的问题？", "output": "　 ", "subset": "b"})  # rejected
    dump_jsonl(ROOT / "subset_a.jsonl", a)
    dump_jsonl(ROOT / "subset_b.jsonl", b)

    # Teacher replies to the augmentation prompt, one per line, in the loose
    # shapes such replies take in practice.
    replies = []
    for k, (q, ans) in enumerate(SUBSET_C):
        obj = json.dumps({"question": q, "answer": ans}, ensure_ascii=False)
        replies.append(obj if k % 2 == 0 else f"好的，结果如下：{obj}")
    replies.append("抱歉，我无法完成这个请求。")  # unparseable, reported and skipped
    with open(ROOT / "augmented_responses.txt", "w", encoding="utf-8") as f:
        f.write("\n".join(replies) + "\n")

    for task, items in sorted(task_items(rng).items()):
        dump_jsonl(ROOT / "tasks" / f"task{task}.jsonl", items)


if __name__ == "__main__":
    main()
