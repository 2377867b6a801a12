// Few-shot preambles for the labeling, summarization and judge prompts.
// Transcribed verbatim (typos included) from the published prompt tables;
// any edit here must bump kTemplateVersion.

#include "smrag/datagen.hpp"

namespace smrag {

namespace {

constexpr std::string_view kRetrieval2 = R"(Given a conversation history, please make a judgment on whether finding some external documents from the web (e.g., Wikipedia) helps to generate a better response. Please answer [Retrieval] or [No Retrieval].

Conversation History
How did the Boer war start?
Many historians stress that in reality the contest was for control of the rich Witwatersrand gold-mining complex located in the SAR.
What were the Boer Commandos?
Rating: [Retrieval]
Explanation: Retrieving  documents will help in generating a good response to the conversation.

Conversation History
How does the taste and texture of swordfish change depending on how it's prepared, and what are some popular cooking methods?
The taste and texture of swordfish can vary greatly depending on how it is prepared. Here are some popular cooking methods and how they affect the taste and texture of the fish: 1. Grilling: Grilling swordfish gives it a smoky flavor and a slightly charred texture. The meat becomes firmer and less flaky. 2. Broiling: Broiling swordfish can give it a crispy exterior while keeping the inside moist and tender. 3. Baking: Baking swordfish at a high temperature can create a crust on the outside of the fish while keeping the inside moist and tender. 4. Pan-searing: Searing swordfish in a hot skillet with oil can give it a crispy exterior while keeping the inside moist and flaky. 5. Poaching: Poaching swordfish in a liquid such as wine, lemon juice or stock can add flavor to the fish and keep it moist and tender. 6. Raw: Swordfish can also be served raw as sushi or sashimi. Raw swordfish has a firm texture and a mild, sweet flavor.
I've only ever had swordfish grilled, what other methods do you recommend trying?
Rating: [No Retrieval]
Explanation: The response doesn't require any external evidence as it can be generated based on the conversation history.
)";

constexpr std::string_view kRetrieval3 = R"(You will be provided with a conversation history, evidence, response to the conversation, and preceding sentences (optional). If the preceding sentence is given, the response should be the sentence that follows those preceding sentences. Your task is to determine whether the information in the response sentence can be fully verified by the evidence or the conversation history. There are three cases:
- If the response can be verified solely with the evidence or the conversation history, then respond with [Continue to Use Evidence].
- If the sentence doesn't require any factual verification (e.g., a subjective sentence or a sentence about common sense), then respond with [No Retrieval].
- If additional information is needed to verify the output sentence, respond with [Retrieval]. Please provide explanations for your judgments.

Conversation History
Given the text: that truth might finally win. The candidates deceive us all. in jets and campaign buses. The smiles they wore were painted on. So sly, those hungry foxes. on top of their soapboxes. "Hey, I'll do much more taxing. so you can be relaxing." I'll give you fruits of their hard work. "You've heard me, one and all! We need a woman president! We need a leader NOW! We need to have a first "first man" to be since smoking pot in college with Bill.. because I JUST WANT TO BE PRESIDENT!! We do not need a woman. but someone true who can. for answers to be found. so maybe we should look. So why is he not jailed? Now here's another "great" debate. What difference does it really make? It tells me this: Who cares?
Can you summarize the text material to describe the main message and theme it conveys?
The text criticizes political candidates and their deceitful tactics during campaigns, highlighting their insincerity and lack of concern for the public. The message suggests a need for a truthful and effective leader to bring about change and progress, rather than focusing on superficial qualities such as gender or past indiscretions. The theme centers around the importance of honesty and integrity in leadership
Can you provide examples from the text that show the candidates' insincerity and deceitful tactics during campaigns?
Preceding sentences: Here are a few examples from the text that demonstrate the candidates' insincerity and deceitful tactics during campaigns.
Evidence: The charisma of the sender of a message may affect how the message is received. Political candidates are often chosen more for their possession of this quality than for their other attributes. A charismatic person can often make tired, trivial messages seem new and important to the recipient; however, this too can become detrimental to communication, as the receiver of the message is less likely to question or ask for clarification of the message.
Response: 'The smiles they wore were painted on' suggests that the candidates are not genuinely happy or friendly, but are instead putting on a façade to deceive the public. - 'So sly, those hungry foxes' implies that the candidates are cunning and opportunistic, willing to say or do whatever it takes to win. - 'Hey, I'll do much more taxing. So you can be relaxing.' This statement is a classic political promise that is often made but rarely kept, highlighting the candidates' tendency to make unrealistic claims in order to garner support.
Rating: [Continue to Use Evidence]
Explanation: The response can be generated solely using the conversational history.
)";

constexpr std::string_view kRelevance = R"(You’ll be provided with a conversation history, along with an evidence.Your job is to determine if the evidence is relevant and provides useful information to generate the response of the given conversation history. If the evidence meets this requirement, respond with [Relevant]; otherwise, generate [Irrelevant].

Conversation History:
How did the Boer war start?
Many historians stress that in reality the contest was for control of the rich Witwatersrand gold-mining complex located in the SAR.
What were the Boer Commandos?
Evidence: Boer Commando Not to be confused with Commando System (South Africa) or Kommandokorps. The Boer commandos or " Kommandos " were volunteer military units of guerilla militia organized by the Boer people of South Africa . The term came into English usage during the Second Boer War of 1899-1902. Boer Commando in action during the First Boer War , 1881 In 1658, war erupted between the Dutch settlers at Cape Colony and the Khoi-khoi . In order to protect the settlement, all able bodied men were conscripted. After the conclusion of this war, all men in the colony were liable for military service and were expected to be ready on short notice.
Rating: [Relevant]
Explanation: The evidence explicitly talks about Boer commandos from which the response to the conversation can be generated.

Conversation History:
What was the origin of the Olmec?
The beginnings of Olmec civilization have traditionally been placed between 1400 and 1200 BCE. It seems that the Olmec had their roots in early farming cultures of Tabasco.
What can you tell me about the Olmec at El Manati?
Past finds of Olmec remains were ritually deposited at El Manati shrine.
How did they start?
Evidence: It is a theory that according to many, could explain the incredible technologies and skills of this enigmatic Ancient Civilization. Even though the Olmec civilization is surrounded by numerous mysteries, researchers believe that all the classical cultures of Mesoamerica originated from this mysterious civilization. But where did this ancient civilization originate? And why is it that we know so little about one of the most influential ancient civilizations of Mesoamerica.
Rating: [Irrelevant]
Explanation: Although the evidence talks about Olmecs, they do not provide information as to how the Olmec civilisation started.
)";

constexpr std::string_view kGroundedness = R"(You will receive a conversation history, evidence, and a response to the conversation. Your task is to evaluate if the response is fully supported by the information provided in the evidence or in the conversation history. Use the following entailment scale to generate a score:
[Fully supported] - All information in output is supported by the evidence, or extractions from the evidence or the conversation history.
[Partially supported] - The response is supported to some extent, but there is major information in the response that is not discussed in the evidence or the conversation history.
[No support / Contradictory] - The response completely ignores, is unrelated to, or contradicts the evidence and the conversation history. This can also happen if the evidence is irrelevant to the conversation history. Make sure to not use any external information/knowledge to judge whether the response is true or not.

Conversation History
I was thinking of buying a cheesecake, can you tell me some information about them?
Sure! Cheesecakes are actually my speciality. Usually it is a baked dessert but it can also be unbaked.
I had no idea you didn't have to bake them, is there any interesting history behind the cheesecake?
Forms of it go back all the way to greece!
That's fascinating, can you tell me more about the Greek cheescake origins?
Sure. The earliest mentions of it were in a Greek book. Essentially it was a cookbook about the art of making cheesecakes I wonder why they were so fond of them.
Is there a traditional recipe for modern cheesecakes?
Response: My favourite layer is the biscuit base, particularly if ginger biscuits are mixed in with the graham crackers.
Evidence: Cheesecakes, having a crust that is separately prepared and baked. A more modern version is found in Forme of Cury', an English cookbook from 1390. On this basis, chef Heston Blumenthal has argued that cheesecake is an English invention. Cheesecake did not evolve into the dessert that we see today up until somewhere around the 18th century. Europeans began removing yeast and adding beaten eggs to the cheesecake instead.
Rating: [No support / Contradictory]
Explanation: The response is neither supported by the evidence or the conversation history
)";

constexpr std::string_view kUtility = R"(Given a conversation history and a response, rate whether the response appears to be a helpful and informative answer to the query, from 1 (lowest) - 5 (highest). We call this score perceived utility.The detailed criterion is as follows:
5: The response provides a complete, highly detailed, and informative response to the conversation, fully satisfying the information needs.
4: The response mostly fulfills the need in the conversation, while there can be some minor improvements such as discussing more detailed information, having better structure of the response, or improving coherence.
3: The response is acceptable, but some major additions or improvements are needed to satisfy users’ needs.
2: The response still addresses the main request, but it is not complete or not relevant to the conversation.
1: The response is barely on-topic or completely irrelevant.

Conversation History
What was snake river canyon for Evel Knievel?
Knievel hired subcontractor and aeronautical engineer Doug Malewicki to build him a rocket-powered cycle to jump across the Snake River, and called it the Skycycle X-1.
What was the Evel Knievel's snake river canyon jump a launch of?
The decision was then made to have Truax build the Skycycle X-2 and have it take off and fly more like a rocket than a motorcycle.
When was the launch?
Response: It was launched on September 7, 1974.
Perceived utility: 5
Explanation: The response is accurate, brief, and directly addresses the user's question. It provides the exact date of the launch, which is the specific information that the user was asking for.

Conversation History:
How do elephants use their trunks for communication and sensing their environment?
Elephants use their trunks for communication and sensing their environment in several ways: 1. Smelling: Elephants have a highly developed sense of smell and can detect scents from miles away. They use their trunks to smell for food, water, mates, predators, and other elephants. They can also smell the scent left by other elephants as a means of identifying them. 2. Touch: Elephants use their trunks to touch and feel their environment. They can use their trunks to brush away leaves or branches to get a clear view of their surroundings, and they can touch other elephants to communicate their mood or intentions. 3. Vocalizations: Elephants can produce a wide range of vocalizations, from low rumbles to high-pitched trumpets. These sounds are produced by muscles in their trunks and are used for communication with other elephants.
I wonder if elephants have ever been observed using their trunks to communicate with other animals besides other elephants?
Response: I'm not sure, but elephants are known to be highly intelligent and social animals, so it's possible that they have developed complex communication systems with other animals as well.
Perceived utility: 2
Explanation: The assistant did provide some relevant information about elephants being highly intelligent and social animals, but doesn't fully satisfy the user's need for a definite answer.
)";

constexpr std::string_view kSummarization = R"(Given a conversation history, your task is to summarise the conversation history in 40-50 words and ask a question so that the summary and the question can be used without the conversation history to generate a meaningful response.

Converation History:
What was the first job John Sherman Cooper held?
He was admitted to the bar by examination in 1928 and opened a legal practice in Somerset.
What was the first office John Sherman Cooper ran for?
After being urged into politics by his uncle, Judge Roscoe Tartar, Cooper ran unopposed for a seat in the Kentucky House of Representatives as a Republican in 1927.
How long was John Sherman Cooper in office in the Kentucky House of Representatives?
Member of the Kentucky House of Representatives from the 41st district. In office, 1928–1930
Did he run for another political office after that?
Summary: John Sherman Cooper started his career as a lawyer in Somerset after being admitted to the bar in 1928. He was later encouraged by his uncle, Judge Roscoe Tartar, to join politics and subsequently ran for a seat in the Kentucky House of Representatives as a Republican candidate in 1927. He went unopposed and served in office from 1928-1930.
Question: Did John Sherman Cooper pursue any other political offices after his term in the Kentucky House of Representatives?

Converation History:
When did Sachin Tendulkar first join a team?
On 14 November 1987, Sachin Tendulkar was selected to represent Bombay in the Ranji Trophy, India's premier domestic First-class cricket tournament, for the 1987–88 season.
Was he successful with that team?
Summary: Sachin Tendulkar first joined the Bombay team in the Ranji Trophy, India's premier domestic First-class cricket tournament, on November 14, 1987.
Question: Was Sachin Tendulkar's performance successful with this team?
)";

// The judge prompt has no few-shot preamble; it is a fill-in form whose
// {conversation}, {question} and {generated_response} slots are substituted.
constexpr std::string_view kJudgeEval = R"(Conversation History:
{conversation}
The Last User Question:
{question}
The Start of Assistant's Answer
{generated_response}
The End of Assistant's Answer
System:
Given the conversation history given above, we would like to request your feedback on the performance of the assistant in response to the Last User Question as displayed above. Please rate the quality, helpfulness, level of details, and relevance of the assistant's answer to the conversation.
Use your judgement considering factors such as informativeness, satisfaction, readability, ease of understanding etc. You can also base your judgement on the naturalness, factuality, correctness, usefulness and objectiveness of the answer.
The assistant receives an overall score on a scale of 0 to 5, where a higher score indicates better overall performance. Please output "Score: an integer number between 0 and 5". In the subsequent line, please provide a comprehensive explanation of your evaluation, avoiding any potential bias.
)";

}  // namespace

std::string_view template_text(CriticTask task) noexcept {
    switch (task) {
    case CriticTask::retrieval2: return kRetrieval2;
    case CriticTask::retrieval3: return kRetrieval3;
    case CriticTask::relevance: return kRelevance;
    case CriticTask::groundedness: return kGroundedness;
    case CriticTask::utility: return kUtility;
    case CriticTask::summarization: return kSummarization;
    case CriticTask::judge_eval: return kJudgeEval;
    }
    return {};
}

}  // namespace smrag
